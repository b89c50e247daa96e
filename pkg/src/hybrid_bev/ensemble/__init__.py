"""Tree ensembles for the residual correction."""

from .importance import pearson_scale, variable_importance
from .trees import (
    FORMAT_VERSION,
    BoostedEnsemble,
    BootstrapSample,
    Forest,
    RegressionTree,
    boost_cv_curve,
    fit_boost,
    fit_forest,
    fit_tree,
    predict_forest,
    select_boost_iterations,
    subject_bootstrap,
    subject_folds,
)

__all__ = [
    "FORMAT_VERSION",
    "BoostedEnsemble",
    "BootstrapSample",
    "Forest",
    "RegressionTree",
    "boost_cv_curve",
    "fit_boost",
    "fit_forest",
    "fit_tree",
    "pearson_scale",
    "predict_forest",
    "select_boost_iterations",
    "subject_bootstrap",
    "subject_folds",
    "variable_importance",
]
