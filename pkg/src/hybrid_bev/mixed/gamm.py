"""Additive mixed models with penalised truncated-line splines.

Every smooth ``f(x)`` is represented in mixed-model form

    f(x) = beta_x * x + sum_k u_k * max(0, x - knot_k),   u_k ~ N(0, sigma_f^2)

so the linear part is an unpenalised fixed effect and the spline
coefficients form a ridge-penalised block, exactly like the trip random
intercepts.  For fixed block variances the fit is a penalised least-squares
solve; the variances are re-estimated by the fixed-point update
``sigma_f^2 <- ||u||^2 / edf_u`` (Schall's algorithm), which approximates
REML without computing its Laplace terms.  The Student-t family wraps the
same solve in iteratively reweighted least squares and profiles the degrees
of freedom over a fixed grid.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import linalg

from ..dataset import DesignMatrix
from ..errors import BasisError, ConvergenceError, SchemaError
from .densities import (
    aic,
    bic,
    gaussian_logdensity,
    student_t_logdensity,
    student_t_weights,
)

log = logging.getLogger(__name__)

DEFAULT_KNOTS = 20
NU_GRID = (3.0, 4.0, 5.0, 7.0, 10.0, 15.0, 30.0)
# A block whose penalty exceeds this multiple of its mean column energy is
# treated as switched off (variance at the zero boundary).
_LAMBDA_CAP = 1e10
# A block whose effective degrees of freedom fall below this is at the zero-variance
# boundary; Schall updates only approach it geometrically, so it is frozen there.
_EDF_FLOOR = 1e-3
_AITKEN_EVERY = 4
_AITKEN_AGREEMENT = 0.1
_AITKEN_MAX_RATIO = 0.999
_AITKEN_MAX_STEP = math.log(100.0)


# --------------------------------------------------------------------------
# Spline basis
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SplineBasis:
    knots: np.ndarray
    kind: str = "truncated-linear"

    def __post_init__(self):
        knots = np.array(self.knots, dtype=np.float64)
        if knots.ndim != 1 or knots.size < 1:
            raise BasisError("a basis needs at least one knot")
        if np.any(np.diff(knots) <= 0):
            raise BasisError("knots must be strictly increasing")
        knots.setflags(write=False)
        object.__setattr__(self, "knots", knots)

    @property
    def K(self) -> int:
        return self.knots.size

    def evaluate(self, x) -> np.ndarray:
        """``(n, K)`` matrix with entries ``max(0, x - knot_k)``."""
        x = np.asarray(x, dtype=np.float64)
        return np.maximum(0.0, x[:, None] - self.knots[None, :])


def spline_basis(x, K: int = DEFAULT_KNOTS) -> SplineBasis:
    """Truncated-line basis with ``K`` knots at equally spaced quantiles.

    Quantiles are taken over the distinct values of ``x`` so that ties
    cannot produce repeated knots.
    """
    if K < 1:
        raise BasisError("K must be >= 1")
    distinct = np.unique(np.asarray(x, dtype=np.float64))
    distinct = distinct[np.isfinite(distinct)]
    if distinct.size < K + 2:
        raise BasisError(f"need at least {K + 2} distinct values for {K} knots, got {distinct.size}")
    probs = np.arange(1, K + 1) / (K + 1)
    return SplineBasis(np.quantile(distinct, probs))


# --------------------------------------------------------------------------
# Model formula
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GammFormula:
    """Which design columns enter the model and how.

    ``smooth_terms`` are ``(variable, K)`` pairs; ``interactions`` are pairs
    of variables whose product gets its own smooth; ``by_terms`` are
    ``(smooth variable, categorical)`` pairs giving an extra smooth per
    non-reference level of the categorical.
    """

    response: str = "residual_phy"
    smooth_terms: tuple[tuple[str, int], ...] = ()
    linear_terms: tuple[str, ...] = ()
    interactions: tuple[tuple[str, str], ...] = ()
    by_terms: tuple[tuple[str, str], ...] = ()
    random_intercept: str | None = "trip_id"
    interaction_knots: int = DEFAULT_KNOTS

    @classmethod
    def from_dict(cls, data: Mapping) -> "GammFormula":
        smooth = []
        for item in data.get("smooth_terms", []):
            if isinstance(item, str):
                smooth.append((item, DEFAULT_KNOTS))
            else:
                smooth.append((item["var"], int(item.get("K", DEFAULT_KNOTS))))
        by = [(b["smooth"], b["categorical"]) for b in data.get("by_terms", [])]
        return cls(
            response=data.get("response", "residual_phy"),
            smooth_terms=tuple(smooth),
            linear_terms=tuple(data.get("linear_terms", [])),
            interactions=tuple(tuple(pair) for pair in data.get("interactions", [])),
            by_terms=tuple(by),
            random_intercept=data.get("random_intercept", "trip_id"),
            interaction_knots=int(data.get("interaction_knots", DEFAULT_KNOTS)),
        )

    @classmethod
    def from_json(cls, path: str | Path) -> "GammFormula":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return {
            "response": self.response,
            "smooth_terms": [{"var": v, "K": k} for v, k in self.smooth_terms],
            "linear_terms": list(self.linear_terms),
            "interactions": [list(p) for p in self.interactions],
            "by_terms": [{"smooth": s, "categorical": c} for s, c in self.by_terms],
            "random_intercept": self.random_intercept,
            "interaction_knots": self.interaction_knots,
        }

    def with_knots(self, K: int) -> "GammFormula":
        return GammFormula(
            self.response,
            tuple((v, K) for v, _ in self.smooth_terms),
            self.linear_terms,
            self.interactions,
            self.by_terms,
            self.random_intercept,
            K,
        )

    def features(self) -> list[str]:
        """Design features this formula reads."""
        names = [v for v, _ in self.smooth_terms] + list(self.linear_terms)
        names += [v for pair in self.interactions for v in pair]
        names += [v for pair in self.by_terms for v in pair]
        return list(dict.fromkeys(names))


def energy_formula(K: int = DEFAULT_KNOTS, random_intercept: bool = True) -> GammFormula:
    """Residual model for recorded trip data: smooths of time,
    ambient temperature, velocity and elevation change, seasonal variants
    of the time and temperature smooths, a temperature-by-elevation-change
    smooth, weather dummies and a trip random intercept."""
    return GammFormula(
        response="residual_phy",
        smooth_terms=(("time", K), ("ambient_temp", K), ("velocity", K), ("diff_elevation", K)),
        linear_terms=("weather",),
        interactions=(("ambient_temp", "diff_elevation"),),
        by_terms=(("time", "seasonality"), ("ambient_temp", "seasonality")),
        random_intercept="trip_id" if random_intercept else None,
        interaction_knots=K,
    )


# --------------------------------------------------------------------------
# Model matrix
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SmoothTerm:
    name: str
    variables: tuple[str, ...]
    by: str | None
    basis: SplineBasis
    center: float
    scale: float

    def raw(self, design: DesignMatrix) -> np.ndarray:
        x = design.column(self.variables[0]).copy()
        for v in self.variables[1:]:
            x = x * design.column(v)
        return x

    def columns(self, design: DesignMatrix) -> tuple[np.ndarray, np.ndarray]:
        """Linear column and spline block, both on the standardised scale."""
        x = self.raw(design)
        linear = (x - self.center) / self.scale
        block = self.basis.evaluate(x) / self.scale
        if self.by is not None:
            indicator = design.column(self.by)
            linear = linear * indicator
            block = block * indicator[:, None]
        return linear, block


def _reference_dropped(design: DesignMatrix, categorical: str) -> list[str]:
    if categorical not in design.groups:
        raise SchemaError(f"design has no categorical feature {categorical!r}")
    return list(design.groups[categorical][1:])


@dataclass
class _Layout:
    fixed_names: list[str]
    fixed_sources: list[tuple]  # ("intercept",) | ("column", name) | ("smooth", i)
    smooth_terms: list[SmoothTerm]
    subjects: list[str]
    reference_levels: list[str] = field(default_factory=list)


def _build_layout(design: DesignMatrix, formula: GammFormula) -> _Layout:
    fixed_names = ["(Intercept)"]
    sources: list[tuple] = [("intercept",)]
    references = []
    for term in formula.linear_terms:
        if term in design.groups:
            references.append(design.groups[term][0])
            for col in _reference_dropped(design, term):
                fixed_names.append(col)
                sources.append(("column", col))
        else:
            design.index(term)
            fixed_names.append(term)
            sources.append(("column", term))

    knots = dict(formula.smooth_terms)
    specs = [(f"s({v})", (v,), None, k) for v, k in formula.smooth_terms]
    for var, categorical in formula.by_terms:
        for col in _reference_dropped(design, categorical):
            specs.append((f"s({var}):{col}", (var,), col, knots.get(var, DEFAULT_KNOTS)))
    for a, b in formula.interactions:
        specs.append((f"s({a}*{b})", (a, b), None, formula.interaction_knots))

    smooths = []
    for name, variables, by, K in specs:
        for v in variables:
            design.index(v)
        x = design.column(variables[0]).copy()
        for v in variables[1:]:
            x = x * design.column(v)
        if by is not None:
            x = x[design.column(by) > 0.5]
            if x.size == 0:
                # level absent from the training data
                x = design.column(variables[0]).copy()
        scale = float(np.std(x)) or 1.0
        smooths.append(SmoothTerm(name, variables, by, spline_basis(x, K), float(np.mean(x)), scale))
    subjects = design.subjects() if formula.random_intercept else []
    return _Layout(fixed_names, sources, smooths, subjects, references)


@dataclass
class ModelMatrix:
    """Columns ``[fixed | spline blocks | random intercepts]`` and block slices."""

    C: np.ndarray
    n_fixed: int
    blocks: list[tuple[str, slice]]


def _model_matrix(design: DesignMatrix, layout: _Layout) -> ModelMatrix:
    n = design.n_rows
    fixed = [np.ones(n)]
    for source in layout.fixed_sources[1:]:
        if source[0] == "column":
            fixed.append(design.column(source[1]))
    linears, splines = [], []
    for term in layout.smooth_terms:
        lin, blk = term.columns(design)
        linears.append(lin)
        splines.append(blk)
    fixed.extend(linears)
    parts = [np.column_stack(fixed)]
    blocks = []
    start = parts[0].shape[1]
    for term, blk in zip(layout.smooth_terms, splines):
        blocks.append((term.name, slice(start, start + blk.shape[1])))
        parts.append(blk)
        start += blk.shape[1]
    if layout.subjects:
        position = {s: i for i, s in enumerate(layout.subjects)}
        Z = np.zeros((n, len(layout.subjects)))
        for row, s in enumerate(design.subject_of_row):
            j = position.get(str(s))
            if j is not None:
                Z[row, j] = 1.0
        blocks.append(("random_intercept", slice(start, start + Z.shape[1])))
        parts.append(Z)
    return ModelMatrix(np.hstack(parts), parts[0].shape[1], blocks)


# --------------------------------------------------------------------------
# Penalised least squares
# --------------------------------------------------------------------------


def penalized_objective(C, y, penalty, theta, weights=None) -> float:
    """``sum w (y - C theta)^2 + sum penalty * theta^2``."""
    r = y - C @ theta
    w = 1.0 if weights is None else weights
    return float(np.sum(w * r * r) + np.sum(penalty * theta * theta))


def penalized_gradient(C, y, penalty, theta, weights=None) -> np.ndarray:
    r = y - C @ theta
    wr = r if weights is None else weights * r
    return -2.0 * (C.T @ wr) + 2.0 * penalty * theta


def _factor(gram, penalty):
    A = gram + np.diag(penalty)
    return linalg.cho_factor(A, lower=False, check_finite=False)


def solve_penalized(C, y, penalty, weights=None, gram=None):
    """Minimise :func:`penalized_objective`; returns ``(theta, diag(A^-1))``.

    One step of iterative refinement is applied so the gradient at the
    returned point is at rounding level.
    """
    Cw = C if weights is None else C * weights[:, None]
    if gram is None:
        gram = Cw.T @ C
    rhs = Cw.T @ y
    factor = _factor(gram, penalty)
    theta = linalg.cho_solve(factor, rhs, check_finite=False)
    A = gram + np.diag(penalty)
    theta = theta + linalg.cho_solve(factor, rhs - A @ theta, check_finite=False)
    a_inv_diag = np.diag(linalg.cho_solve(factor, np.eye(A.shape[0]), check_finite=False)).copy()
    return theta, a_inv_diag


# --------------------------------------------------------------------------
# Fit
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SmoothBlock:
    name: str
    basis: SplineBasis
    linear_coef: float
    u: np.ndarray
    variance: float
    edf: float


@dataclass(frozen=True)
class GammFit:
    formula: GammFormula
    family: str
    nu: float | None
    fixed_coefs: Mapping[str, float]
    smooth_blocks: tuple[SmoothBlock, ...]
    random_intercepts: Mapping[str, float]
    sigma_b2: float | None
    sigma: float
    loglik: float
    n_params: float
    n_obs: int
    iterations: int
    random_edf: float | None
    coef: np.ndarray = field(repr=False)
    penalty: np.ndarray = field(repr=False)
    weights: np.ndarray | None = field(repr=False)
    _layout: _Layout = field(repr=False)

    @property
    def aic(self) -> float:
        return aic(self.loglik, self.n_params)

    @property
    def bic(self) -> float:
        return bic(self.loglik, self.n_params, self.n_obs)

    def model_matrix(self, design: DesignMatrix) -> ModelMatrix:
        return _model_matrix(design, self._layout)

    def predict(self, design: DesignMatrix, use_random: bool = True) -> np.ndarray:
        """Fixed plus smooth contributions; trip intercepts only for trips
        seen in training and only when ``use_random`` is set."""
        mm = _model_matrix(design, self._layout)
        n_fixed_smooth = mm.C.shape[1] - len(self._layout.subjects)
        out = mm.C[:, :n_fixed_smooth] @ self.coef[:n_fixed_smooth]
        if use_random and self._layout.subjects:
            out = out + mm.C[:, n_fixed_smooth:] @ self.coef[n_fixed_smooth:]
        return out

    def summary(self) -> dict:
        return {
            "family": self.family,
            "nu": self.nu,
            "fixed_coefs": dict(self.fixed_coefs),
            "edf": {b.name: b.edf for b in self.smooth_blocks},
            "smoothing_variance": {b.name: b.variance for b in self.smooth_blocks},
            "random_intercept_variance": self.sigma_b2,
            "random_intercept_edf": self.random_edf,
            "sigma": self.sigma,
            "loglik": self.loglik,
            "n_params": self.n_params,
            "n_obs": self.n_obs,
            "aic": self.aic,
            "bic": self.bic,
            "iterations": self.iterations,
        }


def _drop_dependent(C: np.ndarray, n_fixed: int) -> np.ndarray:
    """Boolean mask of fixed columns to keep (rank-revealing QR)."""
    keep = np.ones(C.shape[1], dtype=bool)
    if n_fixed == 0:
        return keep
    _, R, piv = linalg.qr(C[:, :n_fixed], mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    tol = max(d[0], 1e-300) * 1e-9 if d.size else 0.0
    rank = int(np.sum(d > tol))
    keep[piv[rank:]] = False
    return keep


def _constant_fit(design, formula, layout, mm, family, nu, y) -> GammFit:
    coef = np.zeros(mm.C.shape[1])
    coef[0] = float(y[0])
    penalty = np.zeros_like(coef)
    blocks = []
    for (name, sl), term in zip(mm.blocks, layout.smooth_terms):
        blocks.append(SmoothBlock(name, term.basis, 0.0, coef[sl].copy(), 0.0, 1.0))
    fixed = {name: (coef[0] if i == 0 else 0.0) for i, name in enumerate(layout.fixed_names)}
    sigma = 1e-12 * max(1.0, abs(float(y[0])))
    ll = float(np.sum(gaussian_logdensity(y, y, sigma)))
    return GammFit(
        formula, family, nu, fixed, tuple(blocks), {s: 0.0 for s in layout.subjects},
        0.0 if layout.subjects else None, sigma, ll, 1.0, y.size, 0, 0.0 if layout.subjects else None,
        coef, penalty, None, layout,
    )


def _extrapolate(trail, blocks, lam, frozen, energy):
    """Aitken jump of log smoothing parameters that converge linearly.

    Schall updates approach their fixed point geometrically, slowly when a
    block is weakly identified.  Once two successive step ratios of a block
    agree, the geometric limit is extrapolated; the plain updates then
    confirm it, so the fixed point itself is unchanged.
    """
    x0, x1, x2, x3 = trail[-4:]
    d1, d2, d3 = x1 - x0, x2 - x1, x3 - x2
    for k, (name, _) in enumerate(blocks):
        if frozen[name] or d1[k] == 0.0 or d2[k] == 0.0:
            continue
        q1 = d2[k] / d1[k]
        q = d3[k] / d2[k]
        if d3[k] > 0.0 and min(q, q1) >= _AITKEN_MAX_RATIO:
            # steady growth of log lambda: the variance is sliding to zero
            lam[name] = _LAMBDA_CAP * energy[name]
            frozen[name] = True
        elif 0.0 < q < _AITKEN_MAX_RATIO and abs(q - q1) <= _AITKEN_AGREEMENT * (1.0 - q):
            step = float(np.clip(d3[k] * q / (1.0 - q), -_AITKEN_MAX_STEP, _AITKEN_MAX_STEP))
            lam[name] = math.exp(min(x3[k] + step, math.log(_LAMBDA_CAP * energy[name])))


def _fit_fixed_family(
    y: np.ndarray,
    mm: ModelMatrix,
    keep: np.ndarray,
    family: str,
    nu: float | None,
    max_iter: int,
    tol: float,
):
    """Alternate penalised solves with block-variance updates.

    Returns ``(theta, penalty, sigma2, weights, block_edf, block_var, iterations)``
    on the reduced column set ``keep``.
    """
    C = mm.C[:, keep]
    n, q = C.shape
    col_index = np.cumsum(keep) - 1
    blocks = []
    for name, sl in mm.blocks:
        idx = col_index[sl.start:sl.stop][keep[sl]]
        blocks.append((name, idx))

    gram_unweighted = C.T @ C
    energy = {name: max(float(np.mean(np.diag(gram_unweighted)[idx])), 1e-300) for name, idx in blocks}
    sigma2 = float(np.var(y)) or 1.0
    lam = {name: 1e-2 * energy[name] for name, _ in blocks}
    frozen = {name: False for name, _ in blocks}
    weights = None if family == "gaussian" else np.ones(n)

    def penalty_vector():
        pen = np.zeros(q)
        for name, idx in blocks:
            pen[idx] = lam[name]
        return pen

    history = None
    trail = []
    for iteration in range(1, max_iter + 1):
        pen = penalty_vector()
        gram = gram_unweighted if weights is None else (C * weights[:, None]).T @ C
        theta, a_inv = solve_penalized(C, y, pen, weights, gram)
        r = y - C @ theta
        edf_cols = 1.0 - pen * a_inv
        edf_total = float(np.sum(edf_cols))
        wr2 = r * r if weights is None else weights * r * r
        new_sigma2 = max(float(np.sum(wr2)) / max(n - edf_total, 1.0), 1e-300)
        if family == "student_t":
            weights = student_t_weights(r, math.sqrt(new_sigma2), nu)
        block_edf, block_var = {}, {}
        for name, idx in blocks:
            edf_b = float(np.sum(edf_cols[idx]))
            block_edf[name] = edf_b
            ss = float(np.sum(theta[idx] ** 2))
            cap = _LAMBDA_CAP * energy[name]
            if frozen[name] or edf_b <= _EDF_FLOOR or ss <= 0.0:
                frozen[name] = True
                lam[name] = cap
                block_var[name] = new_sigma2 / cap
                continue
            var_b = ss / edf_b
            block_var[name] = var_b
            lam[name] = new_sigma2 / var_b
            if lam[name] >= cap:
                lam[name] = cap
                frozen[name] = True
        current = np.array([new_sigma2] + [block_var[name] for name, _ in blocks])
        sigma2 = new_sigma2
        if history is not None:
            active = np.array([True] + [not frozen[name] for name, _ in blocks])
            change = np.abs(current - history) / np.maximum(np.abs(history), 1e-300)
            if not np.any(active) or np.max(change[active]) < tol:
                break
        history = current
        trail.append(np.log([lam[name] for name, _ in blocks]))
        if len(trail) == _AITKEN_EVERY:
            _extrapolate(trail, blocks, lam, frozen, energy)
            trail = []
    else:
        raise ConvergenceError(
            f"variance updates did not converge in {max_iter} iterations",
            last_iterate={"theta": theta, "sigma2": sigma2, "block_variance": block_var},
        )

    pen = penalty_vector()
    gram = gram_unweighted if weights is None else (C * weights[:, None]).T @ C
    theta, a_inv = solve_penalized(C, y, pen, weights, gram)
    edf_cols = 1.0 - pen * a_inv
    block_edf = {name: float(np.sum(edf_cols[idx])) for name, idx in blocks}
    return theta, pen, sigma2, weights, block_edf, block_var, float(np.sum(edf_cols)), iteration


def fit_gamm(
    design: DesignMatrix,
    formula: GammFormula,
    family: str = "gaussian",
    nu: float | None = None,
    max_iter: int = 200,
    tol: float = 1e-6,
) -> GammFit:
    """Fit an additive mixed model to ``design.response``.

    ``family`` is ``"gaussian"`` or ``"student_t"``; for the latter ``nu``
    may be fixed, otherwise it is chosen from ``NU_GRID`` by in-sample
    log-likelihood (smallest on ties) among the candidates that converge.
    """
    if design.response is None:
        raise SchemaError("design has no response")
    if family not in ("gaussian", "student_t"):
        raise ValueError(f"unknown family {family!r}")
    if family == "student_t" and nu is None:
        best, failure = None, None
        for candidate in NU_GRID:
            try:
                fit = fit_gamm(design, formula, family, candidate, max_iter, tol)
            except ConvergenceError as exc:
                # heavy tails can leave IRLS without a fixed point; skip that nu
                log.warning("student-t fit with nu=%g did not converge", candidate)
                failure = exc
                continue
            if best is None or fit.loglik > best.loglik:
                best = fit
        if best is None:
            raise failure
        return best

    y = np.asarray(design.response, dtype=np.float64)
    layout = _build_layout(design, formula)
    mm = _model_matrix(design, layout)
    if np.ptp(y) == 0.0:
        return _constant_fit(design, formula, layout, mm, family, nu, y)

    keep = _drop_dependent(mm.C, mm.n_fixed)
    theta_k, pen_k, sigma2, weights, block_edf, block_var, edf_total, iterations = _fit_fixed_family(
        y, mm, keep, family, nu, max_iter, tol
    )
    coef = np.zeros(mm.C.shape[1])
    coef[keep] = theta_k
    penalty = np.zeros_like(coef)
    penalty[keep] = pen_k

    mu = mm.C @ coef
    r = y - mu
    sigma = math.sqrt(sigma2)
    if family == "gaussian":
        ml_sigma = math.sqrt(max(float(np.mean(r * r)), 1e-300))
        loglik = float(np.sum(gaussian_logdensity(y, mu, ml_sigma)))
        n_params = edf_total + 1.0
    else:
        loglik = float(np.sum(student_t_logdensity(y, mu, sigma, nu)))
        n_params = edf_total + 2.0

    smooth_blocks = []
    n_lin0 = mm.n_fixed - len(layout.smooth_terms)
    for i, ((name, sl), term) in enumerate(zip(mm.blocks, layout.smooth_terms)):
        lin_index = n_lin0 + i
        smooth_blocks.append(
            SmoothBlock(
                name,
                term.basis,
                float(coef[lin_index]),
                coef[sl].copy(),
                float(block_var.get(name, 0.0)),
                (1.0 if keep[lin_index] else 0.0) + block_edf.get(name, 0.0),
            )
        )
    fixed = {name: float(coef[i]) for i, name in enumerate(layout.fixed_names[:n_lin0])}
    fixed.update({name: 0.0 for name in layout.reference_levels})
    random = {}
    sigma_b2 = None
    re_edf = None
    if layout.subjects:
        sl = mm.blocks[-1][1]
        random = {s: float(v) for s, v in zip(layout.subjects, coef[sl])}
        sigma_b2 = float(block_var.get("random_intercept", 0.0))
        re_edf = block_edf.get("random_intercept", 0.0)
    fit = GammFit(
        formula, family, nu, fixed, tuple(smooth_blocks), random, sigma_b2, sigma, loglik,
        n_params, y.size, iterations, re_edf, coef, penalty, weights, layout,
    )
    log.debug("gamm %s fitted in %d iterations, edf %.2f", family, iterations, edf_total)
    return fit


def predict_gamm(fit: GammFit, newdata: DesignMatrix, use_random: bool = True) -> np.ndarray:
    return fit.predict(newdata, use_random)
