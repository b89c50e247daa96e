"""Mixed-model machinery: null random-intercept model, ICC, penalised-spline
additive mixed models, response densities and information criteria."""

from .densities import aic, bic, gaussian_logdensity, preferred, student_t_logdensity, student_t_weights
from .gamm import (
    DEFAULT_KNOTS,
    NU_GRID,
    GammFit,
    GammFormula,
    SplineBasis,
    energy_formula,
    fit_gamm,
    penalized_gradient,
    penalized_objective,
    predict_gamm,
    solve_penalized,
    spline_basis,
)
from .lmm import VarianceComponents, fit_null_lmm, fit_random_intercept, icc

__all__ = [
    "DEFAULT_KNOTS",
    "NU_GRID",
    "GammFit",
    "GammFormula",
    "SplineBasis",
    "VarianceComponents",
    "aic",
    "bic",
    "energy_formula",
    "fit_gamm",
    "fit_null_lmm",
    "fit_random_intercept",
    "gaussian_logdensity",
    "icc",
    "penalized_gradient",
    "penalized_objective",
    "predict_gamm",
    "preferred",
    "solve_penalized",
    "spline_basis",
    "student_t_logdensity",
    "student_t_weights",
]
