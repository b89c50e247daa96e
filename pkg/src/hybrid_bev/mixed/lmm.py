"""Random-intercept null model fitted by restricted maximum likelihood."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from ..errors import IdentifiabilityError, UndefinedICCError

# Upper end of the search over rho = tau / (1 + tau), tau = sigma_b2 / sigma_w2.
_RHO_MAX = 1.0 - 1e-9
_REL_FLOOR = 1e-12


@dataclass(frozen=True)
class VarianceComponents:
    sigma_b2: float
    sigma_w2: float
    grand_mean: float
    loglik_reml: float
    n_groups: int = 0
    n_obs: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def icc(vc: VarianceComponents) -> float:
    """Share of the total variance that lies between groups."""
    total = vc.sigma_b2 + vc.sigma_w2
    if total <= 0:
        raise UndefinedICCError("both variance components are zero")
    return vc.sigma_b2 / total


class _GroupStats:
    def __init__(self, y: np.ndarray, groups: Sequence):
        labels, inverse = np.unique(np.asarray(groups, dtype=object).astype(str), return_inverse=True)
        if labels.size < 2:
            raise IdentifiabilityError("variance components need at least two groups")
        self.y = y
        self.inverse = inverse
        self.n = np.bincount(inverse).astype(np.float64)
        self.sums = np.bincount(inverse, weights=y)
        self.N = y.size

    def profile(self, tau: float):
        """Return (-2 restricted loglik, sigma_w2, mean) at variance ratio tau."""
        d = 1.0 + self.n * tau
        w = self.n / d
        mean = np.sum(self.sums / d) / np.sum(w)
        centred = self.y - mean
        group_dev = self.sums - self.n * mean
        q = np.dot(centred, centred) - tau * np.sum(group_dev**2 / d)
        q = max(q, 0.0)
        dof = self.N - 1
        sigma_w2 = q / dof
        if sigma_w2 <= 0:
            return -np.inf, 0.0, mean
        m2ll = (
            dof * (math.log(2.0 * math.pi * sigma_w2) + 1.0)
            + np.sum(np.log(d))
            + math.log(np.sum(w))
        )
        return m2ll, sigma_w2, mean


def fit_random_intercept(y, groups: Sequence) -> VarianceComponents:
    """REML variance components of ``y_ij = mean + b_i + e_ij``.

    The restricted likelihood is profiled over the residual variance and
    maximised over the variance ratio by a bounded scalar search.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.size < 3:
        raise IdentifiabilityError("too few observations")
    stats = _GroupStats(y, groups)
    scale2 = max(float(np.var(y)), float(np.mean(y) ** 2), 1.0)
    floor = _REL_FLOOR * scale2

    total_ss = float(np.sum((y - y.mean()) ** 2))
    group_means = stats.sums / stats.n
    within_ss = float(np.sum((y - group_means[stats.inverse]) ** 2))
    if total_ss == 0.0:
        return VarianceComponents(0.0, floor, float(y.mean()), np.inf, stats.n.size, y.size)
    if within_ss <= floor * y.size:
        # no within-group spread: the ratio runs to its bound
        sigma_b2 = float(np.var(group_means, ddof=1))
        return VarianceComponents(sigma_b2, floor, float(group_means.mean()), np.inf, stats.n.size, y.size)

    def objective(rho):
        return stats.profile(rho / (1.0 - rho))[0]

    res = minimize_scalar(objective, bounds=(0.0, _RHO_MAX), method="bounded", options={"xatol": 1e-10})
    rho = float(res.x)
    if objective(0.0) <= res.fun:
        rho = 0.0
    tau = rho / (1.0 - rho)
    m2ll, sigma_w2, mean = stats.profile(tau)
    sigma_w2 = max(sigma_w2, floor)
    return VarianceComponents(tau * sigma_w2, sigma_w2, float(mean), -0.5 * m2ll, stats.n.size, y.size)


def fit_null_lmm(panel, response: str, grouping: str = "trip_id") -> VarianceComponents:
    """Null random-intercept model of a panel channel.

    ``grouping`` is ``"trip_id"`` or the name of a trip attribute such as
    ``"route"``.
    """
    ys, labels = [], []
    for trip in panel:
        values = trip[response]
        if grouping == "trip_id":
            label = trip.trip_id
        else:
            if grouping not in trip.attributes:
                raise IdentifiabilityError(f"trip {trip.trip_id} has no {grouping!r} attribute")
            label = trip.attributes[grouping]
        ys.append(values)
        labels.extend([label] * len(values))
    return fit_random_intercept(np.concatenate(ys), labels)
