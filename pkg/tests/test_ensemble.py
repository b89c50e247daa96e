import dataclasses
import json
import math

import numpy as np
import pytest
from conftest import make_design, make_trip
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hybrid_bev.dataset import PanelDataset, assemble_design
from hybrid_bev.errors import DegreesOfFreedomError
from hybrid_bev.ensemble import (
    BoostedEnsemble,
    Forest,
    RegressionTree,
    boost_cv_curve,
    fit_boost,
    fit_forest,
    fit_tree,
    pearson_scale,
    predict_forest,
    select_boost_iterations,
    subject_bootstrap,
    subject_folds,
    variable_importance,
)


def brute_force_split(X, y, min_leaf=1):
    """Exhaustive search over (feature, midpoint) pairs; lowest feature, then
    lowest threshold, wins ties."""
    best = (0.0, None, None)
    total = np.sum((y - y.mean()) ** 2)
    for f in range(X.shape[1]):
        values = np.unique(X[:, f])
        for lo, hi in zip(values[:-1], values[1:]):
            thr = (lo + hi) / 2
            left = X[:, f] <= thr
            if left.sum() < min_leaf or (~left).sum() < min_leaf:
                continue
            sse = np.sum((y[left] - y[left].mean()) ** 2) + np.sum((y[~left] - y[~left].mean()) ** 2)
            gain = total - sse
            if gain > best[0] + 1e-12 * total:
                best = (gain, f, thr)
    return best


class TestFitTree:
    @pytest.mark.parametrize("seed", range(25))
    def test_first_split_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.integers(0, 6, size=(8, 2)).astype(float)
        y = rng.normal(size=8)
        gain, f, thr = brute_force_split(X, y)
        tree = fit_tree(X, y, min_leaf=1, max_splits=1)
        if f is None:
            assert tree.n_splits == 0
        else:
            assert tree.feature[0] == f
            assert tree.threshold[0] == thr

    def test_step(self):
        x = np.array([-3.0, -2.0, -1.0, 1.0, 2.0, 3.0])
        tree = fit_tree(x[:, None], (x > 0).astype(float), max_splits=1, min_leaf=1)
        assert tree.n_splits == 1 and -1.0 < tree.threshold[0] < 1.0
        np.testing.assert_array_equal(tree.predict(np.array([[-0.5], [0.5]])), [0.0, 1.0])

    def test_constant_response(self, rng):
        tree = fit_tree(rng.normal(size=(20, 3)), np.full(20, 4.2))
        assert tree.n_leaves == 1
        np.testing.assert_array_equal(tree.predict(rng.normal(size=(5, 3))), 4.2)

    def test_split_budget(self, rng):
        X = rng.normal(size=(200, 3))
        tree = fit_tree(X, X[:, 0] + rng.normal(size=200), max_splits=4)
        assert tree.n_splits == 4 and tree.n_leaves == 5

    def test_budget_is_spent_best_first(self, rng):
        x = np.linspace(0, 1, 200)
        y = np.where(x < 0.5, 0.0, 10.0) + np.where(x < 0.25, 1.0, 0.0)
        tree = fit_tree(x[:, None], y, max_splits=1, min_leaf=1)
        assert 0.49 < tree.threshold[0] < 0.51

    def test_invalid(self, rng):
        with pytest.raises(ValueError):
            fit_tree(rng.normal(size=(5, 2)), np.zeros(4))
        with pytest.raises(ValueError):
            fit_tree(rng.normal(size=(5, 2)), np.zeros(5), mtry=3)
        with pytest.raises(ValueError):
            fit_tree(np.zeros((1, 1)), np.zeros(1))
        tree = fit_tree(rng.normal(size=(10, 2)), rng.normal(size=10))
        with pytest.raises(ValueError):
            tree.predict(np.zeros((2, 3)))

    @settings(max_examples=40, deadline=None)
    @given(
        arrays(np.float64, (40, 2), elements=st.floats(-5, 5)),
        arrays(np.float64, 40, elements=st.floats(-5, 5)),
        st.integers(1, 6),
    )
    def test_leaves_hold_training_means(self, X, y, min_leaf):
        tree = fit_tree(X, y, min_leaf=min_leaf)
        pred = tree.predict(X)
        for value in np.unique(pred):
            members = pred == value
            assert members.sum() >= min_leaf
            assert y[members].mean() == pytest.approx(value, abs=1e-9)
        internal = tree.left != -1
        assert np.all((tree.left[internal] > 0) & (tree.right[internal] > 0))

    def test_round_trip(self, rng):
        X = rng.normal(size=(50, 3))
        tree = fit_tree(X, rng.normal(size=50), mtry=2, seed=3)
        back = RegressionTree.from_dict(json.loads(json.dumps(tree.to_dict())))
        np.testing.assert_array_equal(back.predict(X), tree.predict(X))
        assert back.n_leaves == tree.n_leaves


def toy_panel(sizes):
    trips = [make_trip(f"s{i}", n) for i, n in enumerate(sizes)]
    return PanelDataset(tuple(trips))


class TestSubjectBootstrap:
    def test_counting_oracle(self):
        sizes = {"s0": 2, "s1": 3, "s2": 4}
        panel = toy_panel(sizes.values())
        starts = {"s0": 0, "s1": 2, "s2": 5}
        for seed in range(100):
            sample = subject_bootstrap(panel, seed)
            assert len(sample.drawn) == 3
            assert sample.rows.size == sum(sizes[s] for s in sample.drawn)
            # whole trips, in draw order
            expected = np.concatenate([np.arange(starts[s], starts[s] + sizes[s]) for s in sample.drawn])
            np.testing.assert_array_equal(sample.rows, expected)
            assert sample.out_of_bag == frozenset(sizes) - frozenset(sample.drawn)

    def test_single_subject(self):
        sample = subject_bootstrap(np.array(["a", "a", "a"]), 0)
        assert sample.drawn == ("a",) and not sample.out_of_bag
        np.testing.assert_array_equal(sample.rows, [0, 1, 2])

    def test_oob_fraction(self):
        subjects = np.repeat(np.arange(100), 3)
        fractions = [len(subject_bootstrap(subjects, seed).out_of_bag) / 100 for seed in range(200)]
        assert abs(np.mean(fractions) - (1 - 1 / 100) ** 100) <= 0.05

    def test_generator_and_seed_agree(self):
        subjects = np.repeat(np.arange(10), 2)
        assert subject_bootstrap(subjects, 7).drawn == subject_bootstrap(subjects, np.random.default_rng(7)).drawn


def panel_design(seed, n_subjects=20, per=20, signal=True):
    rng = np.random.default_rng(seed)
    subj = np.repeat(np.arange(n_subjects), per)
    n = subj.size
    a, b, c = rng.normal(size=(3, n))
    y = (3 * a if signal else 0.0) + rng.normal(0, 0.5 if signal else 1.0, n)
    return make_design({"a": a, "b": b, "c": c}, y, subj)


class TestForest:
    def test_prediction_is_tree_mean(self):
        design = panel_design(0)
        forest = fit_forest(design, ntrees=10, mtry=2, seed=1)
        total = np.zeros(design.n_rows)
        for tree in forest.trees:
            total += tree.predict(design.rows)
        np.testing.assert_array_equal(forest.predict(design), total / 10)

    def test_hand_routed_toy(self):
        stumps = [(0, 0.5, 1.0, 2.0), (1, 0.0, -1.0, 1.0), (0, 1.5, 0.0, 10.0), (1, 2.0, 5.0, 6.0), (0, -1.0, 3.0, 4.0)]
        trees = tuple(
            RegressionTree.from_dict(
                {"n_features": 2, "root": {"feature": f, "threshold": t, "n": 2, "left": {"value": lo, "n": 1}, "right": {"value": hi, "n": 1}}}
            )
            for f, t, lo, hi in stumps
        )
        forest = Forest(trees, ((),) * 5, ("x0", "x1"), 1, 1, 0, None)
        rows = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 3.0]])
        # row 0: 1, -1, 0, 5, 4 ; row 1: 2, 1, 0, 5, 4 ; row 2: 2, 1, 10, 6, 4
        np.testing.assert_allclose(predict_forest(forest, rows), [9 / 5, 12 / 5, 23 / 5], rtol=0, atol=1e-15)

    def test_single_tree(self):
        design = panel_design(1)
        forest = fit_forest(design, ntrees=1, mtry=3)
        np.testing.assert_array_equal(forest.predict(design), forest.trees[0].predict(design.rows))

    def test_constant_response(self):
        design = panel_design(2)
        design = make_design({"a": design.column("a")}, np.full(design.n_rows, 1.5), design.subject_of_row)
        forest = fit_forest(design, ntrees=5)
        np.testing.assert_array_equal(forest.predict(design), 1.5)
        assert forest.oob_error == 0.0

    def test_oob_absent_without_out_of_bag_rows(self):
        design = make_design({"a": np.arange(6.0)}, np.arange(6.0), ["only"] * 6)
        assert fit_forest(design, ntrees=3, min_leaf=1).oob_error is None

    def test_oob_tracks_noise(self):
        forest = fit_forest(panel_design(3), ntrees=50, mtry=2)
        assert 0.2 < forest.oob_error < 1.0

    def test_defaults(self):
        forest = fit_forest(panel_design(4))
        assert forest.ntrees == 100 and forest.mtry == 3  # 4 clamped to the 3 features

    def test_deterministic_and_thread_safe(self):
        design = panel_design(5)
        a = fit_forest(design, ntrees=8, mtry=2, seed=11)
        b = fit_forest(design, ntrees=8, mtry=2, seed=11, jobs=3)
        assert a.to_dict() == b.to_dict()
        assert fit_forest(design, ntrees=8, mtry=2, seed=12).to_dict() != a.to_dict()

    def test_round_trip(self):
        design = panel_design(6)
        forest = fit_forest(design, ntrees=5, mtry=2)
        back = Forest.from_dict(json.loads(json.dumps(forest.to_dict())))
        np.testing.assert_array_equal(back.predict(design), forest.predict(design))
        assert back.oob_error == forest.oob_error

    def test_wrong_kind(self):
        boost = fit_boost(panel_design(6), ntrees=2)
        with pytest.raises(ValueError):
            Forest.from_dict(boost.to_dict())

    def test_column_mismatch(self):
        design = panel_design(7)
        forest = fit_forest(design, ntrees=2)
        other = make_design({"b": design.column("b"), "a": design.column("a"), "c": design.column("c")}, None, design.subject_of_row)
        with pytest.raises(ValueError):
            forest.predict(other)


def training_mse(model, design):
    staged = model.staged_predict(design)
    return np.mean((design.response[None, :] - staged) ** 2, axis=1)


class TestBoost:
    def test_training_mse_non_increasing(self):
        violations = 0
        for seed in range(20):
            design = panel_design(seed)
            mse = training_mse(fit_boost(design, ntrees=500, nsplit=2, shrinkage=0.1), design)
            violations += int(np.sum(np.diff(mse) > 0))
        assert violations == 0

    def test_stage_formula(self):
        design = panel_design(8)
        model = fit_boost(design, ntrees=5, shrinkage=0.3)
        expected = np.full(design.n_rows, design.response.mean())
        for tree in model.trees:
            expected = expected + 0.3 * tree.predict(design.rows)
        np.testing.assert_allclose(model.predict(design), expected, rtol=1e-12)
        np.testing.assert_array_equal(model.staged_predict(design)[-1], model.predict(design))

    def test_zero_trees_is_mean(self):
        design = panel_design(9)
        np.testing.assert_array_equal(fit_boost(design, ntrees=0).predict(design), design.response.mean())

    def test_tiny_shrinkage_stays_constant(self):
        design = panel_design(10)
        model = fit_boost(design, ntrees=100, shrinkage=1e-6)
        spread = np.max(np.abs(design.response - design.response.mean()))
        assert np.max(np.abs(model.predict(design) - design.response.mean())) <= 100 * 1e-6 * spread

    def test_full_step_fits_separable_data(self):
        x = np.linspace(-1, 1, 40)
        y = np.where(x > 0, 2.0, -1.0)
        design = make_design({"x": x}, y, np.repeat(np.arange(4), 10))
        model = fit_boost(design, ntrees=1, nsplit=8, shrinkage=1.0, min_leaf=1)
        np.testing.assert_allclose(model.predict(design), y, atol=1e-12)

    def test_invalid(self):
        design = panel_design(11)
        with pytest.raises(ValueError):
            fit_boost(design, shrinkage=0.0)
        with pytest.raises(ValueError):
            fit_boost(design, shrinkage=1.5)
        with pytest.raises(ValueError):
            fit_boost(design, nsplit=0)
        with pytest.raises(ValueError):
            fit_boost(design).predict(design, stages=101)

    def test_deterministic_and_round_trip(self):
        design = panel_design(12)
        a = fit_boost(design, ntrees=20, nsplit=3).with_iterations(12)
        assert a.to_dict() == fit_boost(design, ntrees=20, nsplit=3).with_iterations(12).to_dict()
        back = BoostedEnsemble.from_dict(json.loads(json.dumps(a.to_dict())))
        assert back.n_iterations == 12
        np.testing.assert_array_equal(back.predict(design), a.predict(design))


class TestStageSelection:
    def test_folds(self):
        assert subject_folds(["a", "b", "c"]) == [["a"], ["b"], ["c"]]
        assert subject_folds(list("abcde"), 2) == [["a", "b", "c"], ["d", "e"]]
        with pytest.raises(ValueError):
            subject_folds(list("abc"), 1)

    def test_argmin_of_curve(self):
        design = panel_design(13)
        curve = boost_cv_curve(design, ntrees=60, shrinkage=0.1)
        chosen = select_boost_iterations(design, ntrees=60, shrinkage=0.1)
        assert curve[chosen] == curve.min()
        assert curve[chosen] <= 1.05 * curve.min()
        assert chosen > 10  # real signal needs many stages

    def test_pure_noise_stops_early(self):
        small = 0
        for seed in range(20):
            design = panel_design(seed, signal=False)
            small += select_boost_iterations(design, ntrees=100, nsplit=1, shrinkage=0.05) <= 10
        assert small >= 16

    def test_grouped_folds_hold_out_whole_subjects(self):
        design = panel_design(14, n_subjects=6)
        folds = subject_folds(design.subjects(), 3)
        curve = boost_cv_curve(design, ntrees=5, folds=folds)
        assert curve.shape == (6,)


class TestPearsonScale:
    def test_exact_fit(self):
        assert pearson_scale([1.0, 2.0], [1.0, 2.0]) == 0.0

    def test_unit_residuals(self):
        assert pearson_scale([1.0, -1.0, 1.0, -1.0], 0.0) == 1.0

    def test_variance_function(self):
        assert pearson_scale([2.0, 4.0], [0.0, 0.0], variance=[4.0, 16.0], n_params=1) == 2.0

    def test_monte_carlo(self):
        rng = np.random.default_rng(0)
        y = rng.normal(0, 2, 10_000)
        assert abs(pearson_scale(y, np.full(y.size, y.mean()), n_params=1) - 4) <= 0.4

    def test_no_degrees_of_freedom(self):
        with pytest.raises(DegreesOfFreedomError):
            pearson_scale([1.0, 2.0], 0.0, n_params=2)
        with pytest.raises(ValueError):
            pearson_scale([1.0, 2.0], 0.0, variance=[1.0, 0.0])


class TestImportance:
    def test_planted_signal_dominates(self):
        for seed in range(10):
            design = panel_design(seed)
            forest = fit_forest(design, ntrees=30, mtry=2, seed=seed)
            scores = {k: variable_importance(forest, design, k) for k in "abc"}
            assert max(scores, key=scores.get) == "a"

    def test_duplicates_share_importance(self):
        design = panel_design(1)
        a = design.column("a")
        dup = make_design({"a": a, "a2": a.copy(), "b": design.column("b")}, design.response, design.subject_of_row)
        single = variable_importance(fit_forest(design, ntrees=50, mtry=2), design, "a")
        forest = fit_forest(dup, ntrees=50, mtry=2)
        assert variable_importance(forest, dup, "a") < single
        assert variable_importance(forest, dup, "a2") < single

    def test_unused_feature_is_zero(self):
        design = panel_design(2)
        stump = fit_boost(design, ntrees=1, nsplit=1, shrinkage=1.0)
        assert stump.trees[0].feature[0] == 0
        assert variable_importance(stump, design, "b") == 0.0
        assert variable_importance(stump, design, "c") == 0.0
        assert variable_importance(stump, design, "a") > 0.0

    def test_callable_model_and_draw_count(self):
        design = panel_design(3)
        score = variable_importance(lambda d: 3 * d.column("a"), design, "a", n_draws=50, seed=1)
        assert score > 10

    def test_one_hot_group_marginalised_jointly(self):
        panel = PanelDataset(tuple(
            make_trip(f"t{i}", 4, attributes={"weather": w}) for i, w in enumerate(["sunny", "rainy", "cloudy"] * 3)
        ))
        design = assemble_design(panel, ["velocity", "weather"])
        design = dataclasses.replace(design, response=5.0 * design.column("weather=sunny") + 0.1)
        assert design.feature_columns("weather") == [1, 2, 3]
        # a model reading one indicator still loses everything when the group is replaced
        score = variable_importance(lambda d: 5.0 * d.column("weather=sunny"), design, "weather")
        assert score > 100 and math.isfinite(score)

    def test_perfect_model(self):
        design = panel_design(4)
        with pytest.raises(ZeroDivisionError):
            variable_importance(lambda d: d.response, design, "a")
