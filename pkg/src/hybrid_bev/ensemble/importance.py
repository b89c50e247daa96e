"""Dispersion scale and marginalisation-based variable importance."""

from __future__ import annotations

import numpy as np

from ..dataset import DesignMatrix
from ..errors import DegreesOfFreedomError


def pearson_scale(y, mu, variance=None, n_params: float = 0) -> float:
    """Pearson estimate of the dispersion, ``sum((y - mu)^2 / V(mu)) / (N - p)``.

    ``variance`` defaults to 1 for every observation (Gaussian variance
    function).
    """
    y = np.asarray(y, dtype=np.float64)
    mu = np.broadcast_to(np.asarray(mu, dtype=np.float64), y.shape)
    v = np.ones_like(y) if variance is None else np.broadcast_to(np.asarray(variance, dtype=np.float64), y.shape)
    if np.any(v <= 0):
        raise ValueError("variance function must be positive")
    dof = y.size - n_params
    if dof <= 0:
        raise DegreesOfFreedomError(f"{y.size} observations leave no residual degrees of freedom for {n_params} parameters")
    return float(np.sum((y - mu) ** 2 / v) / dof)


def _predictor(model):
    return model if callable(model) and not hasattr(model, "predict") else model.predict


def variable_importance(model, design: DesignMatrix, feature: str, n_draws: int = 256, seed: int = 0) -> float:
    """Relative loss increase when ``feature`` is marginalised out.

    The feature's columns (all indicator columns for a categorical) are set
    jointly to values taken from rows of ``design``, predictions are
    averaged over those draws, and the MSE of the averaged prediction is
    compared with the MSE of the full model:
    ``(MSE_marginal - MSE_full) / MSE_full``.

    Parameters
    ----------
    model : object with ``predict(design)`` or a callable
    design : DesignMatrix
        Evaluation data with a response.
    feature : str
        A feature name as passed to ``assemble_design``.
    n_draws : int
        Number of rows whose values are used; all rows when fewer.
    """
    if design.response is None:
        raise ValueError("design has no response")
    cols = design.feature_columns(feature)
    predict = _predictor(model)
    y = np.asarray(design.response, dtype=np.float64)
    full = np.asarray(predict(design), dtype=np.float64)
    mse_full = float(np.mean((y - full) ** 2))
    if mse_full == 0.0:
        raise ZeroDivisionError("model fits the data exactly; relative importance is undefined")
    n = design.n_rows
    rng = np.random.default_rng(seed)
    donors = np.arange(n) if n <= n_draws else np.sort(rng.choice(n, size=n_draws, replace=False))
    rows = np.array(design.rows, dtype=np.float64)
    marginal = np.zeros(n)
    for d in donors:
        rows[:, cols] = design.rows[d, cols]
        marginal += predict(design.replace_rows(rows))
    marginal /= donors.size
    mse_marg = float(np.mean((y - marginal) ** 2))
    return (mse_marg - mse_full) / mse_full
