"""Regression trees, subject-level bagging and gradient boosting."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..dataset import DesignMatrix, PanelDataset
from . import _kernel

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


def _as_rows(data, columns: tuple[str, ...] | None = None) -> np.ndarray:
    if isinstance(data, DesignMatrix):
        if columns is not None and tuple(data.columns) != tuple(columns):
            raise ValueError("design columns differ from the ones the model was fitted on")
        return np.ascontiguousarray(data.rows, dtype=np.float64)
    return np.ascontiguousarray(np.atleast_2d(np.asarray(data, dtype=np.float64)))


@dataclass(frozen=True)
class RegressionTree:
    """Binary tree in flat arrays; ``left == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    count: np.ndarray
    n_features: int

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.left == -1))

    @property
    def n_splits(self) -> int:
        return int(np.sum(self.left != -1))

    def predict(self, X) -> np.ndarray:
        X = _as_rows(X)
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        return _kernel.route(self.feature, self.threshold, self.left, self.right, self.value, X)

    def to_dict(self) -> dict:
        def node(k):
            if self.left[k] == -1:
                return {"value": float(self.value[k]), "n": int(self.count[k])}
            return {
                "feature": int(self.feature[k]),
                "threshold": float(self.threshold[k]),
                "n": int(self.count[k]),
                "left": node(int(self.left[k])),
                "right": node(int(self.right[k])),
            }

        return {"n_features": self.n_features, "root": node(0)}

    @classmethod
    def from_dict(cls, data: dict) -> "RegressionTree":
        feature, threshold, left, right, value, count = [], [], [], [], [], []

        def add(spec):
            k = len(feature)
            feature.append(spec.get("feature", -1))
            threshold.append(spec.get("threshold", 0.0))
            left.append(-1)
            right.append(-1)
            value.append(spec.get("value", 0.0))
            count.append(spec.get("n", 0))
            if "left" in spec:
                left[k] = add(spec["left"])
                right[k] = add(spec["right"])
            return k

        add(data["root"])
        return cls(
            np.asarray(feature, dtype=np.int64),
            np.asarray(threshold, dtype=np.float64),
            np.asarray(left, dtype=np.int64),
            np.asarray(right, dtype=np.int64),
            np.asarray(value, dtype=np.float64),
            np.asarray(count, dtype=np.int64),
            int(data["n_features"]),
        )


def _grow(X, y, order, mtry, max_splits, min_leaf, seed) -> RegressionTree:
    arrays = _kernel.grow_tree(X, y, order, mtry, max_splits, min_leaf, seed)
    return RegressionTree(*arrays, n_features=X.shape[1])


def fit_tree(
    X,
    y,
    mtry: int | None = None,
    max_splits: int | None = None,
    min_leaf: int = 5,
    seed: int = 0,
) -> RegressionTree:
    """Grow a CART regression tree by greedy SSE reduction.

    Parameters
    ----------
    X, y : array_like
        Feature rows and response.
    mtry : int, optional
        Non-constant features examined per node; all when omitted.
    max_splits : int, optional
        Split budget, spent best-first.  Unlimited when omitted.
    min_leaf : int
        Smallest allowed leaf.
    seed : int
        Seed of the per-node feature sampling.
    """
    X = _as_rows(X)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if X.shape[0] != y.size:
        raise ValueError("X and y disagree on the number of rows")
    if y.size < 2:
        raise ValueError("a tree needs at least two rows")
    if min_leaf < 1:
        raise ValueError("min_leaf must be >= 1")
    p = X.shape[1]
    mtry = p if mtry is None else int(mtry)
    if not 1 <= mtry <= p:
        raise ValueError(f"mtry must lie in [1, {p}]")
    max_splits = -1 if max_splits is None else int(max_splits)
    return _grow(X, y, _kernel.presort(X), mtry, max_splits, min_leaf, int(seed))


# ---------------------------------------------------------------- bootstrap


@dataclass(frozen=True)
class BootstrapSample:
    rows: np.ndarray
    drawn: tuple
    out_of_bag: frozenset


def _subject_rows(subject_of_row) -> dict:
    subjects = np.asarray(subject_of_row)
    labels, first, inverse = np.unique(subjects, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rows = {}
    by_label = np.argsort(inverse, kind="stable")
    bounds = np.cumsum(np.bincount(inverse, minlength=labels.size))
    start = 0
    for k, stop in enumerate(bounds):
        rows[labels[k]] = by_label[start:stop]
        start = stop
    return {labels[k]: rows[labels[k]] for k in order}


def subject_bootstrap(subject_of_row, rng) -> BootstrapSample:
    """Resample whole subjects with replacement.

    Every drawn subject contributes all of its rows, once per draw.
    ``subject_of_row`` is a per-row label array or a ``PanelDataset``, whose
    rows are its trips' samples in panel order.  ``rng`` is a seed or a
    ``numpy.random.Generator``.
    """
    if isinstance(subject_of_row, PanelDataset):
        subject_of_row = np.repeat(subject_of_row.trip_ids, [len(t) for t in subject_of_row])
    rng = np.random.default_rng(rng)
    groups = _subject_rows(subject_of_row)
    return _bootstrap(groups, list(groups), rng)


def _bootstrap(groups: dict, labels: list, rng) -> BootstrapSample:
    picks = rng.integers(0, len(labels), size=len(labels))
    drawn = tuple(labels[i] for i in picks)
    rows = np.concatenate([groups[s] for s in drawn])
    oob = frozenset(labels) - frozenset(drawn)
    return BootstrapSample(rows, drawn, oob)


# ------------------------------------------------------------------- forest


@dataclass(frozen=True)
class Forest:
    """Bagged regression trees trained on subject bootstrap samples."""

    trees: tuple[RegressionTree, ...]
    drawn: tuple[tuple, ...]
    columns: tuple[str, ...]
    mtry: int
    min_leaf: int
    seed: int
    oob_error: float | None

    @property
    def ntrees(self) -> int:
        return len(self.trees)

    def predict(self, X) -> np.ndarray:
        X = _as_rows(X, self.columns or None)
        total = np.zeros(X.shape[0])
        for tree in self.trees:
            total += tree.predict(X)
        return total / len(self.trees)

    def to_dict(self) -> dict:
        return {
            "kind": "forest",
            "version": FORMAT_VERSION,
            "columns": list(self.columns),
            "mtry": self.mtry,
            "min_leaf": self.min_leaf,
            "seed": self.seed,
            "oob_error": self.oob_error,
            "drawn": [[str(s) for s in d] for d in self.drawn],
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Forest":
        _check_version(data, "forest")
        return cls(
            tuple(RegressionTree.from_dict(t) for t in data["trees"]),
            tuple(tuple(d) for d in data["drawn"]),
            tuple(data["columns"]),
            int(data["mtry"]),
            int(data["min_leaf"]),
            int(data["seed"]),
            data["oob_error"],
        )


def _check_version(data: dict, kind: str):
    if data.get("kind") != kind:
        raise ValueError(f"expected a serialized {kind}, got {data.get('kind')!r}")
    if data.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported {kind} format version {data.get('version')!r}")


def _map(fn, items, jobs: int):
    if jobs <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def fit_forest(
    design: DesignMatrix,
    ntrees: int = 100,
    mtry: int = 4,
    min_leaf: int = 5,
    seed: int = 0,
    jobs: int = 1,
) -> Forest:
    """Random forest on a design matrix with subject-level bootstrap.

    ``mtry`` larger than the number of features is reduced to it.  The
    out-of-bag error averages, over rows that are out of bag for at least
    one tree, the squared error of the mean out-of-bag prediction; it is
    ``None`` when no row is ever out of bag.  Results depend only on
    ``seed``, not on ``jobs``.
    """
    if ntrees < 1:
        raise ValueError("ntrees must be >= 1")
    if design.response is None:
        raise ValueError("design has no response")
    X = _as_rows(design)
    y = np.ascontiguousarray(design.response, dtype=np.float64)
    mtry = max(1, min(int(mtry), X.shape[1]))
    rng = np.random.default_rng(seed)
    groups = _subject_rows(design.subject_of_row)
    labels = list(groups)
    order = _kernel.presort(X)
    samples, seeds = [], []
    for _ in range(ntrees):
        samples.append(_bootstrap(groups, labels, rng))
        seeds.append(int(rng.integers(0, 2**31 - 1)))

    def grow(k):
        rows = samples[k].rows
        Xb = np.ascontiguousarray(X[rows])
        ob = _kernel.resample_order(order, rows, y.size)
        return _grow(Xb, y[rows], ob, mtry, -1, min_leaf, seeds[k])

    trees = _map(grow, range(ntrees), jobs)

    oob_sum = np.zeros(y.size)
    oob_n = np.zeros(y.size)
    for tree, sample in zip(trees, samples):
        if not sample.out_of_bag:
            continue
        rows = np.concatenate([groups[s] for s in sample.out_of_bag])
        oob_sum[rows] += tree.predict(X[rows])
        oob_n[rows] += 1
    seen = oob_n > 0
    oob = float(np.mean((y[seen] - oob_sum[seen] / oob_n[seen]) ** 2)) if seen.any() else None
    log.debug("forest: %d trees, oob mse %s", ntrees, oob)
    return Forest(
        tuple(trees), tuple(s.drawn for s in samples), tuple(design.columns), mtry, min_leaf, int(seed), oob
    )


def predict_forest(forest: Forest, X) -> np.ndarray:
    return forest.predict(X)


# ----------------------------------------------------------------- boosting


@dataclass(frozen=True)
class BoostedEnsemble:
    """Least-squares gradient boosting with shrinkage.

    ``predict`` uses the first ``n_iterations`` trees.
    """

    initial: float
    trees: tuple[RegressionTree, ...]
    shrinkage: float
    nsplit: int
    min_leaf: int
    columns: tuple[str, ...]
    n_iterations: int

    @property
    def ntrees(self) -> int:
        return len(self.trees)

    def staged_predict(self, X) -> np.ndarray:
        """Predictions after 0, 1, ..., ntrees stages, shape ``(ntrees + 1, n)``."""
        X = _as_rows(X, self.columns or None)
        out = np.empty((len(self.trees) + 1, X.shape[0]))
        out[0] = self.initial
        for m, tree in enumerate(self.trees):
            out[m + 1] = out[m] + self.shrinkage * tree.predict(X)
        return out

    def predict(self, X, stages: int | None = None) -> np.ndarray:
        stages = self.n_iterations if stages is None else int(stages)
        if not 0 <= stages <= len(self.trees):
            raise ValueError(f"stages must lie in [0, {len(self.trees)}]")
        X = _as_rows(X, self.columns or None)
        out = np.full(X.shape[0], self.initial)
        for tree in self.trees[:stages]:
            out += self.shrinkage * tree.predict(X)
        return out

    def with_iterations(self, n: int) -> "BoostedEnsemble":
        if not 0 <= n <= len(self.trees):
            raise ValueError(f"iterations must lie in [0, {len(self.trees)}]")
        return BoostedEnsemble(
            self.initial, self.trees, self.shrinkage, self.nsplit, self.min_leaf, self.columns, int(n)
        )

    def to_dict(self) -> dict:
        return {
            "kind": "boost",
            "version": FORMAT_VERSION,
            "columns": list(self.columns),
            "initial": self.initial,
            "shrinkage": self.shrinkage,
            "nsplit": self.nsplit,
            "min_leaf": self.min_leaf,
            "n_iterations": self.n_iterations,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BoostedEnsemble":
        _check_version(data, "boost")
        return cls(
            float(data["initial"]),
            tuple(RegressionTree.from_dict(t) for t in data["trees"]),
            float(data["shrinkage"]),
            int(data["nsplit"]),
            int(data["min_leaf"]),
            tuple(data["columns"]),
            int(data["n_iterations"]),
        )


def _boost_arrays(X, y, ntrees, nsplit, shrinkage, min_leaf):
    if ntrees < 0:
        raise ValueError("ntrees must be >= 0")
    if nsplit < 1:
        raise ValueError("nsplit must be >= 1")
    if not 0.0 < shrinkage <= 1.0:
        raise ValueError("shrinkage must lie in (0, 1]")
    order = _kernel.presort(X)
    initial = float(np.mean(y))
    fitted = np.full(y.size, initial)
    trees = []
    for _ in range(ntrees):
        tree = _grow(X, y - fitted, order.copy(), X.shape[1], nsplit, min_leaf, 0)
        fitted += shrinkage * tree.predict(X)
        trees.append(tree)
    return initial, tuple(trees)


def fit_boost(
    design: DesignMatrix,
    ntrees: int = 100,
    nsplit: int = 1,
    shrinkage: float = 0.05,
    min_leaf: int = 5,
) -> BoostedEnsemble:
    """Boost ``ntrees`` trees of ``nsplit`` splits each on squared error.

    Every stage fits a tree to the current residuals using all features,
    so the result is deterministic.
    """
    if design.response is None:
        raise ValueError("design has no response")
    X = _as_rows(design)
    y = np.ascontiguousarray(design.response, dtype=np.float64)
    initial, trees = _boost_arrays(X, y, ntrees, nsplit, shrinkage, min_leaf)
    return BoostedEnsemble(initial, trees, float(shrinkage), int(nsplit), int(min_leaf), tuple(design.columns), ntrees)


def subject_folds(subjects: Sequence, n_folds: int | None = None) -> list[list]:
    """Partition subjects into contiguous folds; one subject per fold by default."""
    subjects = list(subjects)
    if n_folds is None or n_folds >= len(subjects):
        return [[s] for s in subjects]
    if n_folds < 2:
        raise ValueError("need at least two folds")
    return [list(chunk) for chunk in np.array_split(np.asarray(subjects, dtype=object), n_folds)]


def boost_cv_curve(
    design: DesignMatrix,
    ntrees: int = 100,
    nsplit: int = 1,
    shrinkage: float = 0.05,
    min_leaf: int = 5,
    folds: Sequence[Sequence] | None = None,
) -> np.ndarray:
    """Fold-averaged held-out MSE after 0..ntrees stages.

    Each fold holds out whole subjects; the curve averages the per-fold
    mean squared errors.
    """
    X = _as_rows(design)
    y = np.asarray(design.response, dtype=np.float64)
    groups = _subject_rows(design.subject_of_row)
    folds = subject_folds(list(groups)) if folds is None else [list(f) for f in folds]
    if len(folds) < 2:
        raise ValueError("need at least two folds")
    curve = np.zeros(ntrees + 1)
    for fold in folds:
        test = np.concatenate([groups[s] for s in fold])
        train = np.setdiff1d(np.arange(y.size), test)
        Xt = np.ascontiguousarray(X[train])
        initial, trees = _boost_arrays(Xt, y[train], ntrees, nsplit, shrinkage, min_leaf)
        Xh = np.ascontiguousarray(X[test])
        pred = np.full(test.size, initial)
        curve[0] += np.mean((y[test] - pred) ** 2)
        for m, tree in enumerate(trees):
            pred += shrinkage * tree.predict(Xh)
            curve[m + 1] += np.mean((y[test] - pred) ** 2)
    return curve / len(folds)


def select_boost_iterations(
    design: DesignMatrix,
    ntrees: int = 100,
    nsplit: int = 1,
    shrinkage: float = 0.05,
    min_leaf: int = 5,
    folds: Sequence[Sequence] | None = None,
) -> int:
    """Stage count in ``[0, ntrees]`` minimising the leave-subjects-out MSE.

    Ties go to the fewest stages.
    """
    curve = boost_cv_curve(design, ntrees, nsplit, shrinkage, min_leaf, folds)
    return int(np.argmin(curve))
