"""Hybrid prediction and leave-one-trip-out evaluation.

A hybrid estimate of a trip's terminal energy is the physics prediction
plus a corrective model's estimate of the physics residual.  Corrective
models are trained on per-sample cumulative residuals of the training trips
and read off at the last sample of the held-out trip.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .dataset import PanelDataset, assemble_design, compute_residual, diff_elevation, measured_energy
from .ensemble import fit_boost, fit_forest, select_boost_iterations, subject_folds
from .errors import HybridBEVError, UndefinedAPEError
from .mixed import DEFAULT_KNOTS, GammFormula, energy_formula, fit_gamm
from .physics import VehicleSpec, simulate_panel_trip

log = logging.getLogger(__name__)

APE_GUARD = 1.0  # J
RECIPES = ("gamm_gaussian", "gamm_t", "forest", "boost", "physics_only", "data_only")
TREE_FEATURES = ("time", "ambient_temp", "velocity", "diff_elevation", "seasonality", "weather")


def ape_terminal(y_T: float, f_T: float) -> float:
    """Absolute percentage error ``|(y_T - f_T) / y_T|`` as a fraction."""
    if not np.isfinite(y_T) or abs(y_T) < APE_GUARD:
        raise UndefinedAPEError(f"terminal energy {y_T!r} J is too close to zero for a relative error")
    return abs((y_T - f_T) / y_T)


def hybrid_predict(phys_pred_T: float, corrective_pred_T: float) -> float:
    if not (np.isfinite(phys_pred_T) and np.isfinite(corrective_pred_T)):
        raise ValueError("predictions must be finite")
    return float(phys_pred_T) + float(corrective_pred_T)


@dataclass(frozen=True)
class Summary:
    min: float
    avg: float
    max: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def summarize(errors) -> Summary:
    values = np.asarray(list(errors.values()) if isinstance(errors, Mapping) else list(errors), dtype=np.float64)
    if values.size == 0:
        raise ValueError("no errors to summarise")
    return Summary(float(values.min()), float(values.mean()), float(values.max()))


# --------------------------------------------------------------------------
# Panel preparation
# --------------------------------------------------------------------------


def prepare_panel(panel: PanelDataset, vehicle: VehicleSpec | None = None, soc0: float = 0.9) -> PanelDataset:
    """Add ``phys_pred``, ``residual_phy`` and ``diff_elevation`` to every trip.

    ``measured_energy`` is taken from the trip when present, otherwise
    integrated from battery current and voltage.
    """
    vehicle = vehicle or VehicleSpec()

    def one(trip):
        if not trip.has("measured_energy"):
            trip = trip.with_channels(measured_energy=measured_energy(trip))
        phys = simulate_panel_trip(vehicle, trip, soc0).predicted_energy
        extra = {"phys_pred": phys, "residual_phy": compute_residual(trip, phys)}
        if not trip.has("diff_elevation"):
            extra["diff_elevation"] = diff_elevation(trip)
        return trip.with_channels(**extra)

    return panel.map(one)


# --------------------------------------------------------------------------
# Recipes
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Recipe:
    """A corrective model and its hyperparameters.

    ``tag`` is one of ``RECIPES``.  ``cv_folds`` sets how many subject folds
    choose the boosting stage count (``None``: one trip per fold; ``0``: no
    selection, all stages are used).  ``knots`` overrides the knot count of
    every smooth in the GAMM formula.
    """

    tag: str
    ntrees: int = 100
    mtry: int = 4
    nsplit: int = 1
    shrinkage: float = 0.05
    min_leaf: int = 5
    knots: int | None = None
    nu: float | None = None
    formula: GammFormula | None = None
    features: tuple[str, ...] = TREE_FEATURES
    cv_folds: int | None = 10
    seed: int = 0

    def __post_init__(self):
        if self.tag not in RECIPES:
            raise ValueError(f"unknown recipe {self.tag!r}; choose from {', '.join(RECIPES)}")

    @property
    def response(self) -> str:
        return "measured_energy" if self.tag == "data_only" else "residual_phy"

    @property
    def uses_physics(self) -> bool:
        return self.tag != "data_only"

    def gamm_formula(self) -> GammFormula:
        """The formula, with every smooth set to ``knots`` knots when given."""
        base = self.formula or energy_formula(DEFAULT_KNOTS)
        return base if self.knots is None else base.with_knots(self.knots)

    def with_params(self, **changes) -> "Recipe":
        return dataclasses.replace(self, **changes)

    def params(self) -> dict:
        out = {k: v for k, v in dataclasses.asdict(self).items() if k not in ("formula",)}
        out["features"] = list(self.features)
        if self.formula is not None:
            out["formula"] = self.formula.to_dict()
        return out


@dataclass(frozen=True)
class FittedRecipe:
    """A trained corrective model; ``predict`` returns one value per row."""

    recipe: Recipe
    model: object
    features: tuple[str, ...]
    encoders: Mapping[str, tuple[str, ...]]
    training_subjects: np.ndarray

    def design(self, panel: PanelDataset):
        return assemble_design(panel, self.features, encoders=self.encoders)

    def predict_rows(self, panel: PanelDataset) -> np.ndarray:
        if self.model is None:
            return np.zeros(panel.n_observations)
        return np.asarray(self.model.predict(self.design(panel)), dtype=np.float64)

    def predict_terminal(self, trip) -> float:
        """Corrective estimate at the last sample of ``trip``."""
        return float(self.predict_rows(PanelDataset((trip,)))[-1])


def fit_recipe(recipe: Recipe, panel: PanelDataset) -> FittedRecipe:
    """Train the recipe's corrective model on every trip of ``panel``."""
    if recipe.tag == "physics_only":
        return FittedRecipe(recipe, None, (), {}, np.asarray(panel.trip_ids))
    if recipe.tag.startswith("gamm"):
        formula = recipe.gamm_formula()
        design = assemble_design(panel, formula.features(), response=recipe.response)
        family = "student_t" if recipe.tag == "gamm_t" else "gaussian"
        model = fit_gamm(design, formula, family=family, nu=recipe.nu)
        features = tuple(formula.features())
    else:
        features = tuple(recipe.features)
        design = assemble_design(panel, features, response=recipe.response)
        if recipe.tag == "forest":
            model = fit_forest(design, recipe.ntrees, recipe.mtry, recipe.min_leaf, recipe.seed)
        else:
            model = fit_boost(design, recipe.ntrees, recipe.nsplit, recipe.shrinkage, recipe.min_leaf)
            if recipe.cv_folds != 0 and len(panel) >= 2:
                folds = subject_folds(design.subjects(), recipe.cv_folds)
                stages = select_boost_iterations(
                    design, recipe.ntrees, recipe.nsplit, recipe.shrinkage, recipe.min_leaf, folds
                )
                model = model.with_iterations(stages)
    return FittedRecipe(recipe, model, features, dict(design.encoders), np.asarray(design.subject_of_row))


# --------------------------------------------------------------------------
# Leave-one-trip-out cross-validation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EvaluationReport:
    model_tag: str
    per_trip: Mapping[str, float]
    physics_baseline: Mapping[str, float]
    summary: Summary | None
    physics_summary: Summary | None
    failures: Mapping[str, str] = field(default_factory=dict)
    leaked_observations: int = 0
    params: Mapping = field(default_factory=dict)

    @property
    def n_failed(self) -> int:
        return len(self.failures)

    def to_dict(self) -> dict:
        return {
            "model_tag": self.model_tag,
            "params": dict(self.params),
            "summary": None if self.summary is None else self.summary.to_dict(),
            "physics_summary": None if self.physics_summary is None else self.physics_summary.to_dict(),
            "per_trip": dict(self.per_trip),
            "physics_baseline": dict(self.physics_baseline),
            "failures": dict(self.failures),
            "leaked_observations": self.leaked_observations,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["trip_id", "physics_ape", "hybrid_ape"])
        for trip_id, phys in self.physics_baseline.items():
            hybrid = self.per_trip.get(trip_id)
            writer.writerow([trip_id, repr(phys), "" if hybrid is None else repr(hybrid)])
        return buf.getvalue()


@dataclass(frozen=True)
class FoldResult:
    trip_id: str
    physics_ape: float | None
    hybrid_ape: float | None
    leaked: int
    error: str | None


Fitter = Callable[[Recipe, PanelDataset], FittedRecipe]


def _run_fold(panel: PanelDataset, recipe: Recipe, trip_id: str, fitter: Fitter) -> FoldResult:
    trip = panel[trip_id]
    physics_ape = None
    try:
        y_T = float(trip["measured_energy"][-1])
        phys_T = float(trip["phys_pred"][-1])
        physics_ape = ape_terminal(y_T, phys_T)
        fitted = fitter(recipe, panel.without([trip_id]))
        leaked = int(np.sum(fitted.training_subjects == trip_id))
        correction = fitted.predict_terminal(trip)
        estimate = hybrid_predict(phys_T, correction) if recipe.uses_physics else correction
        return FoldResult(trip_id, physics_ape, ape_terminal(y_T, estimate), leaked, None)
    except (HybridBEVError, ValueError, np.linalg.LinAlgError) as exc:
        log.warning("fold %s failed: %s", trip_id, exc)
        return FoldResult(trip_id, physics_ape, None, 0, f"{type(exc).__name__}: {exc}")


def loocv(panel: PanelDataset, recipe: Recipe, jobs: int = 1, fitter: Fitter = fit_recipe) -> EvaluationReport:
    """Leave each trip out once, train on the rest, score the held-out trip.

    ``panel`` must carry ``measured_energy`` and ``phys_pred`` (and
    ``residual_phy`` for residual recipes); see ``prepare_panel``.  A fold
    whose fit or score fails is recorded in ``failures`` and left out of the
    summary.
    """
    if len(panel) < 2:
        raise ValueError("cross-validation needs at least two trips")
    ids = panel.trip_ids
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda i: _run_fold(panel, recipe, i, fitter), ids))
    else:
        results = [_run_fold(panel, recipe, i, fitter) for i in ids]

    per_trip = {r.trip_id: r.hybrid_ape for r in results if r.hybrid_ape is not None}
    baseline = {r.trip_id: r.physics_ape for r in results if r.physics_ape is not None}
    failures = {r.trip_id: r.error for r in results if r.error is not None}
    report = EvaluationReport(
        recipe.tag,
        per_trip,
        baseline,
        summarize(per_trip) if per_trip else None,
        summarize(baseline) if baseline else None,
        failures,
        sum(r.leaked for r in results),
        recipe.params(),
    )
    if report.summary is not None:
        log.info("%s: avg APE %.4f over %d folds (%d failed)", recipe.tag, report.summary.avg, len(per_trip), len(failures))
    return report


# --------------------------------------------------------------------------
# Grid search
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GridRow:
    parameter: str
    value: object
    summary: Summary | None
    failures: int


@dataclass(frozen=True)
class GridTable:
    model_tag: str
    rows: tuple[GridRow, ...]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["parameter", "value", "min_error", "avg_error", "max_error", "failed_folds"])
        for row in self.rows:
            s = row.summary
            cells = ["", "", ""] if s is None else [repr(s.min), repr(s.avg), repr(s.max)]
            writer.writerow([row.parameter, row.value, *cells, row.failures])
        return buf.getvalue()


def grid_search(
    panel: PanelDataset,
    recipe: Recipe,
    grid: Mapping[str, Sequence],
    jobs: int = 1,
    fitter: Fitter = fit_recipe,
) -> GridTable:
    """One-at-a-time sweep: each listed value of a hyperparameter is run
    through ``loocv`` with the other hyperparameters at ``recipe``'s values."""
    if not grid or not any(len(v) for v in grid.values()):
        raise ValueError("grid is empty")
    known = {f.name for f in dataclasses.fields(Recipe)} - {"tag", "formula", "features"}
    rows = []
    for name, values in grid.items():
        if name not in known:
            raise ValueError(f"{name!r} is not a tunable hyperparameter of {recipe.tag}")
        for value in values:
            report = loocv(panel, recipe.with_params(**{name: value}), jobs, fitter)
            rows.append(GridRow(name, value, report.summary, report.n_failed))
    return GridTable(recipe.tag, tuple(rows))
