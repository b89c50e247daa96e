"""Response-family log densities and information criteria."""

from __future__ import annotations

import math
from typing import Mapping

import numpy as np
from scipy.special import gammaln

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def _scalar_or_array(out):
    return float(out) if np.ndim(out) == 0 else out


def gaussian_logdensity(y, mu, sigma):
    """Log of the normal density with mean ``mu`` and standard deviation ``sigma``."""
    if np.any(np.asarray(sigma) <= 0):
        raise ValueError("sigma must be positive")
    z = (np.asarray(y, dtype=np.float64) - mu) / sigma
    return _scalar_or_array(-_LOG_SQRT_2PI - np.log(sigma) - 0.5 * z * z)


def student_t_logdensity(y, mu, sigma, nu):
    """Log of the location-scale Student-t density with ``nu`` degrees of freedom."""
    if np.any(np.asarray(sigma) <= 0) or np.any(np.asarray(nu) <= 0):
        raise ValueError("sigma and nu must be positive")
    z = (np.asarray(y, dtype=np.float64) - mu) / sigma
    out = (
        gammaln((nu + 1.0) / 2.0)
        - gammaln(nu / 2.0)
        - 0.5 * np.log(nu * math.pi)
        - np.log(sigma)
        - (nu + 1.0) / 2.0 * np.log1p(z * z / nu)
    )
    return _scalar_or_array(out)


def student_t_weights(residual, sigma, nu):
    """IRLS weights ``(nu + 1) / (nu + (r / sigma)^2)`` of the t likelihood."""
    z = np.asarray(residual, dtype=np.float64) / sigma
    return (nu + 1.0) / (nu + z * z)


def aic(loglik: float, p: float) -> float:
    if p < 0:
        raise ValueError("p must be non-negative")
    return -2.0 * loglik + 2.0 * p


def bic(loglik: float, p: float, n: float) -> float:
    if p < 0 or n < 1:
        raise ValueError("need p >= 0 and n >= 1")
    return -2.0 * loglik + math.log(n) * p


def preferred(criteria: Mapping[str, float]) -> str:
    """Name of the model with the smallest criterion value (first on ties)."""
    if not criteria:
        raise ValueError("no models to compare")
    return min(criteria, key=lambda name: criteria[name])
