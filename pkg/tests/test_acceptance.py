"""Acceptance criteria, one test per criterion.

Every test records a PASS/FAIL line in ``conftest.ACCEPTANCE_LINES``; the
lines are printed in the terminal summary.  The end-to-end runs share one
cache so each LOOCV is computed once per session.
"""

import math
import time

import numpy as np
import pytest
from conftest import ACCEPTANCE_LINES, make_design, make_trip
from test_ensemble import brute_force_split, panel_design, training_mse
from test_mixed import linear_truth

from hybrid_bev.dataset import battery_power
from hybrid_bev.ensemble import fit_boost, fit_forest, fit_tree, subject_bootstrap
from hybrid_bev.evaluation import Recipe, ape_terminal, loocv, prepare_panel
from hybrid_bev.mixed import (
    GammFormula,
    VarianceComponents,
    aic,
    fit_gamm,
    fit_null_lmm,
    fit_random_intercept,
    gaussian_logdensity,
    icc,
    penalized_gradient,
    penalized_objective,
    solve_penalized,
    student_t_logdensity,
)
from hybrid_bev.synthetic import SyntheticConfig, generate_synthetic

pytestmark = [pytest.mark.slow, pytest.mark.filterwarnings("ignore:categorical level")]

SEEDS = (0, 1, 2)
CORRECTIVE = ("gamm_gaussian", "forest", "boost")


def record(name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


class Runs:
    """Memoised LOOCV reports on the default synthetic panels."""

    def __init__(self):
        self.panels = {}
        self.reports = {}
        self.seconds = {}

    def panel(self, seed):
        if seed not in self.panels:
            self.panels[seed] = prepare_panel(generate_synthetic(SyntheticConfig(seed=seed))[0])
        return self.panels[seed]

    def get(self, seed, tag, **params):
        key = (seed, tag, tuple(sorted(params.items())))
        if key not in self.reports:
            start = time.perf_counter()
            self.reports[key] = loocv(self.panel(seed), Recipe(tag, **params))
            self.seconds[key] = time.perf_counter() - start
        return self.reports[key]


@pytest.fixture(scope="module")
def runs():
    return Runs()


def test_synthetic_headline(runs):
    ok, parts = True, []
    for seed in SEEDS:
        physics = runs.get(seed, "physics_only").summary.avg
        ok &= 0.2 <= physics <= 0.5
        cells = [f"physics {physics:.3f}"]
        for tag in CORRECTIVE:
            avg = runs.get(seed, tag).summary.avg
            ok &= avg <= 0.5 * physics
            cells.append(f"{tag} {avg:.3f} ({1 - avg / physics:.0%} less)")
        seconds = sum(s for (sd, *_), s in runs.seconds.items() if sd == seed)
        ok &= seconds <= 600
        parts.append(f"seed {seed}: " + ", ".join(cells) + f", {seconds:.0f} s")
    assert record("synthetic headline (>= 50% APE reduction, 3 of 3 seeds)", ok, "; ".join(parts))


def test_icc_recovery():
    target = 0.071
    sigma_eps = 2.0e5
    sigma_b = sigma_eps * math.sqrt(target / (1 - target))
    estimates = []
    for seed in range(20):
        config = SyntheticConfig(sigma_b=sigma_b, sigma_eps=sigma_eps, amp_time=0.0, amp_temp=0.0, seed=seed)
        panel = prepare_panel(generate_synthetic(config)[0])
        estimates.append(icc(fit_null_lmm(panel, "residual_phy")))
    mean = float(np.mean(estimates))
    exact = icc(VarianceComponents(1.0, 3.0, 0.0, 0.0))
    ok = abs(mean - target) <= 0.03 and abs(exact - 0.25) <= 1e-12
    assert record("ICC recovery", ok, f"mean over 20 seeds {mean:.4f} (target 0.071 +/- 0.03); formula case {exact!r}")


def density_gaps():
    return {z: student_t_logdensity(z, 0.0, 1.0, 1e6) - gaussian_logdensity(z, 0.0, 1.0) for z in (0.0, 1.0, 3.0)}


@pytest.mark.xfail(
    strict=True,
    reason="at nu = 1e6 and z = 3 the exact log-density gap is 1.55e-5, above the 1e-5 tolerance",
)
def test_density_correctness():
    gaps = density_gaps()
    peak = student_t_logdensity(0.0, 0.0, 1.0, 1.0) - math.log(1 / math.pi)
    ok = all(abs(g) <= 1e-5 for g in gaps.values()) and abs(peak) <= 1e-12
    detail = ", ".join(f"|gap(z={z:g})| = {abs(g):.3e}" for z, g in gaps.items()) + f"; nu=1 peak error {abs(peak):.1e}"
    assert record("density correctness", ok, detail)


def test_density_gap_is_the_true_one():
    # the failing cell above is a property of the t density, not of the code:
    # the first-order gap (z^4 - 2 z^2 - 1) / (4 nu) is already 1.55e-5 at z = 3
    gaps = density_gaps()
    for z, g in gaps.items():
        assert g == pytest.approx((z**4 - 2 * z**2 - 1) / 4e6, abs=1e-9)
    assert abs(gaps[0.0]) <= 1e-5 and abs(gaps[1.0]) <= 1e-5


def test_ensemble_oracles():
    split_mismatch = 0
    for seed in range(25):
        rng = np.random.default_rng(seed)
        X = rng.integers(0, 6, size=(8, 2)).astype(float)
        y = rng.normal(size=8)
        _, f, thr = brute_force_split(X, y)
        tree = fit_tree(X, y, min_leaf=1, max_splits=1)
        got = (None, None) if tree.n_splits == 0 else (tree.feature[0], tree.threshold[0])
        split_mismatch += got != (f, thr)

    design = panel_design(0)
    forest = fit_forest(design, ntrees=10, mtry=2, seed=1)
    tree_mean = sum(t.predict(design.rows) for t in forest.trees) / 10
    forest_exact = bool(np.array_equal(forest.predict(design), tree_mean))

    violations = 0
    for seed in range(20):
        d = panel_design(seed)
        violations += int(np.sum(np.diff(training_mse(fit_boost(d, ntrees=500, nsplit=2, shrinkage=0.1), d)) > 0))

    subjects = np.repeat(np.arange(100), 3)
    oob = np.mean([len(subject_bootstrap(subjects, seed).out_of_bag) / 100 for seed in range(200)])
    oob_gap = abs(oob - (1 - 1 / 100) ** 100)

    ok = split_mismatch == 0 and forest_exact and violations == 0 and oob_gap <= 0.05
    detail = (
        f"first-split mismatches {split_mismatch}/25; forest == tree mean: {forest_exact}; "
        f"MSE increases over 20 x 500 stages: {violations}; OOB fraction {oob:.4f} (gap {oob_gap:.4f})"
    )
    assert record("ensemble oracles", ok, detail)


def test_mixed_model_oracles():
    estimates = []
    for seed in range(10):
        rng = np.random.default_rng(seed)
        groups = np.repeat(np.arange(50), 20)
        y = rng.normal(0, 2, 50)[groups] + rng.normal(0, 1, 1000)
        vc = fit_random_intercept(y, groups)
        estimates.append((vc.sigma_b2, vc.sigma_w2))
    b, w = np.mean(estimates, axis=0)
    reml_ok = abs(b - 4) <= 0.6 and abs(w - 1) <= 0.15

    rng = np.random.default_rng(12345)
    C = rng.normal(size=(80, 12))
    y = rng.normal(size=80)
    penalty = np.r_[np.zeros(3), np.full(9, 2.5)]
    theta, _ = solve_penalized(C, y, penalty)
    grad = penalized_gradient(C, y, penalty, theta)
    h = 1e-4
    fd = np.array(
        [
            (penalized_objective(C, y, penalty, theta + h * e) - penalized_objective(C, y, penalty, theta - h * e)) / (2 * h)
            for e in np.eye(12)
        ]
    )
    grad_err = max(np.max(np.abs(grad)), np.max(np.abs(fd - grad)))

    x, yl, subj = linear_truth(0)
    fit = fit_gamm(make_design({"x": x}, yl, subj), GammFormula(response="y", smooth_terms=(("x", 20),), random_intercept=None))
    edf = fit.smooth_blocks[0].edf

    ok = reml_ok and grad_err <= 1e-8 and edf <= 1.5
    detail = f"REML (sigma_b2, sigma_w2) = ({b:.3f}, {w:.3f}); gradient max-norm {grad_err:.1e}; linear-truth edf {edf:.3f}"
    assert record("mixed-model oracles", ok, detail)


def test_hyperparameter_flatness(runs):
    ok, parts = True, []
    for tag in ("forest", "boost"):
        # ntrees = 100 is the default, already run for the headline
        avgs = [runs.get(0, tag, **({} if n == 100 else {"ntrees": n})).summary.avg for n in (50, 100, 200)]
        spread = (max(avgs) - min(avgs)) / min(avgs)
        ok &= spread <= 0.25
        parts.append(f"{tag} " + "/".join(f"{a:.4f}" for a in avgs) + f" (spread {spread:.1%})")
    assert record("hyperparameter flatness (ntrees 50/100/200)", ok, "; ".join(parts))


def test_protocol_integrity(runs):
    # runs after every other end-to-end test in this module, so the leak count
    # covers all acceptance LOOCV runs
    leaks = sum(r.leaked_observations for r in runs.reports.values())
    first = runs.get(0, "forest", ntrees=50).to_json()
    again = loocv(runs.panel(0), Recipe("forest", ntrees=50)).to_json()
    identical = first == again
    ok = leaks == 0 and identical
    assert record("protocol integrity", ok, f"{leaks} leaked observations over {len(runs.reports)} runs; rerun byte-identical: {identical}")


def test_formula_spot_values():
    a = aic(-100.0, 3)
    e = ape_terminal(10.0, 9.0)
    trip = make_trip(n=1, battery_current=[10.0], battery_voltage=[400.0])
    p = float(battery_power(trip)[0])
    ok = a == 206 and e == 0.1 and p == 4000
    assert record("formula spot values", ok, f"AIC(-100, 3) = {a!r}; APE(10, 9) = {e!r}; P(10 A, 400 V) = {p!r} W")
