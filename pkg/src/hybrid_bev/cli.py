"""Command-line entry point: ``hybrid-bev <subcommand> [flags]``.

Every subcommand writes its results under ``--out`` and logs to standard
error (level from ``HYBRID_BEV_LOG``, default WARNING).  A JSON file given
with ``--config`` supplies defaults for any flag; flags on the command line
win.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .dataset import TUM_SCHEMA, assemble_design, load_panel, preprocess, read_raw_manifest, save_panel
from .ensemble import variable_importance
from .errors import HybridBEVError
from .evaluation import RECIPES, Recipe, fit_recipe, grid_search, loocv, prepare_panel
from .mixed import GammFormula, fit_null_lmm, icc
from .physics import VehicleSpec
from .synthetic import SyntheticConfig, generate_synthetic

log = logging.getLogger("hybrid_bev")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FAILED_FOLDS = 2

# Flag defaults, applied after --config so that the config can fill gaps.
DEFAULTS = {
    "schema": None,
    "vehicle": None,
    "formula": None,
    "recipe": "boost",
    "ntrees": 100,
    "mtry": 4,
    "nsplit": 1,
    "lambda": 0.05,
    "knots": None,
    "family": "gaussian",
    "recuperation": None,
    "downsample": 1,
    "seed": 0,
    "jobs": None,
    "grouping": "trip_id",
    "cv_folds": 10,
    "trips": 50,
    "samples": 200,
}
GRID_PARAMS = {"ntrees": "ntrees", "mtry": "mtry", "nsplit": "nsplit", "lambda": "shrinkage", "knots": "knots"}


def _setup_logging():
    level = os.environ.get("HYBRID_BEV_LOG", "WARNING").upper()
    logging.basicConfig(
        stream=sys.stderr, level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s"
    )


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    log.info("wrote %s", path)


def _write_json(path: Path, data):
    _write(path, json.dumps(data, indent=2) + "\n")


def _list_of(kind):
    def parse(text: str):
        try:
            return [kind(v) for v in text.split(",") if v.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None

    return parse


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON file with default flag values")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--jobs", type=int, help="parallel workers (default: available cores)")

    panel = argparse.ArgumentParser(add_help=False)
    panel.add_argument("--manifest", type=Path, required=True, help="panel manifest.json")
    panel.add_argument("--vehicle", type=Path, help="vehicle spec JSON")
    panel.add_argument("--recuperation", type=float, help="recuperated share of braking power")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--recipe", help=f"one of {', '.join(RECIPES)}")
    model.add_argument("--formula", type=Path, help="GAMM formula JSON")
    model.add_argument("--family", choices=("gaussian", "student_t"))
    model.add_argument("--cv-folds", dest="cv_folds", type=int, help="subject folds choosing boosting stages")

    scalar = argparse.ArgumentParser(add_help=False)
    scalar.add_argument("--ntrees", type=int)
    scalar.add_argument("--mtry", type=int)
    scalar.add_argument("--nsplit", type=int)
    scalar.add_argument("--lambda", dest="lambda", type=float, help="boosting shrinkage")
    scalar.add_argument("--knots", type=int)

    parser = argparse.ArgumentParser(prog="hybrid-bev", description="Hybrid physics and data-driven BEV energy prediction")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="parse raw trips and preprocess them")
    p.add_argument("--manifest", type=Path, required=True, help="raw-data manifest.json")
    p.add_argument("--schema", help="column-to-role JSON file, or 'tum'")
    p.add_argument("--downsample", type=int, help="keep every n-th sample")

    sub.add_parser("simulate", parents=[common, panel], help="add physics predictions and residuals")

    p = sub.add_parser("icc", parents=[common, panel], help="null-model ICC of the physics residual")
    p.add_argument("--grouping", help="trip_id or a trip attribute such as route")

    sub.add_parser("fit", parents=[common, panel, model, scalar], help="fit a corrective model on all trips")
    sub.add_parser("evaluate", parents=[common, panel, model, scalar], help="leave-one-trip-out evaluation")
    sub.add_parser("importance", parents=[common, panel, model, scalar], help="marginalisation variable importance")

    p = sub.add_parser("grid", parents=[common, panel, model], help="one-at-a-time hyperparameter sweep")
    p.add_argument("--ntrees", type=_list_of(int))
    p.add_argument("--mtry", type=_list_of(int))
    p.add_argument("--nsplit", type=_list_of(int))
    p.add_argument("--lambda", dest="lambda", type=_list_of(float))
    p.add_argument("--knots", type=_list_of(int))

    p = sub.add_parser("synth", parents=[common], help="write a synthetic panel with known truth")
    p.add_argument("--trips", type=int)
    p.add_argument("--samples", type=int)
    return parser


def _resolve(args: argparse.Namespace) -> dict:
    """Merge flag values over --config values over built-in defaults."""
    config = {}
    if getattr(args, "config", None) is not None:
        config = json.loads(Path(args.config).read_text())
        if not isinstance(config, dict):
            raise ValueError("--config must hold a JSON object")
    opts = dict(DEFAULTS)
    opts.update({k.replace("-", "_"): v for k, v in config.items()})
    opts.update({k: v for k, v in vars(args).items() if v is not None})
    if opts.get("jobs") is None:
        opts["jobs"] = os.cpu_count() or 1
    return opts


def _vehicle(opts) -> VehicleSpec:
    spec = VehicleSpec.from_json(opts["vehicle"]) if opts.get("vehicle") else VehicleSpec()
    if opts.get("recuperation") is not None:
        spec = spec.with_recuperation(opts["recuperation"])
    return spec


def _prepared_panel(opts):
    return prepare_panel(load_panel(opts["manifest"]), _vehicle(opts))


def _recipe(opts, **overrides) -> Recipe:
    tag = opts["recipe"]
    if tag == "gamm_gaussian" and opts.get("family") == "student_t":
        tag = "gamm_t"
    formula = GammFormula.from_json(opts["formula"]) if opts.get("formula") else None
    values = dict(
        ntrees=opts["ntrees"],
        mtry=opts["mtry"],
        nsplit=opts["nsplit"],
        shrinkage=opts["lambda"],
        knots=opts["knots"],
        formula=formula,
        cv_folds=opts["cv_folds"],
        seed=opts["seed"],
    )
    values.update(overrides)
    return Recipe(tag, **values)


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def cmd_ingest(opts) -> int:
    schema = opts.get("schema")
    if schema is None or schema == "tum":
        mapping = TUM_SCHEMA
    else:
        mapping = json.loads(Path(schema).read_text())
    trips = read_raw_manifest(opts["manifest"], mapping)
    panel, record = preprocess(trips, keep_every=opts["downsample"])
    save_panel(panel, opts["out"] / "panel")
    _write_json(opts["out"] / "ingest_log.json", record.to_dict())
    return EXIT_OK


def cmd_simulate(opts) -> int:
    panel = _prepared_panel(opts)
    save_panel(panel, opts["out"] / "panel")
    rows = [
        {
            "trip_id": trip.trip_id,
            "measured_energy": float(trip["measured_energy"][-1]),
            "phys_pred": float(trip["phys_pred"][-1]),
            "residual_phy": float(trip["residual_phy"][-1]),
        }
        for trip in panel
    ]
    _write_json(opts["out"] / "simulation.json", {"vehicle": _vehicle(opts).to_dict(), "trips": rows})
    return EXIT_OK


def cmd_icc(opts) -> int:
    panel = _prepared_panel(opts)
    vc = fit_null_lmm(panel, "residual_phy", opts["grouping"])
    report = {"grouping": opts["grouping"], "sigma_b2": vc.sigma_b2, "sigma_w2": vc.sigma_w2, "icc": icc(vc)}
    _write_json(opts["out"] / "icc.json", report)
    return EXIT_OK


def cmd_fit(opts) -> int:
    recipe = _recipe(opts)
    fitted = fit_recipe(recipe, _prepared_panel(opts))
    model = fitted.model
    if model is None:
        body = None
    elif hasattr(model, "to_dict"):
        body = model.to_dict()
    else:
        body = model.summary()
    _write_json(opts["out"] / "model.json", {"recipe": recipe.params(), "features": list(fitted.features), "model": body})
    return EXIT_OK


def cmd_evaluate(opts) -> int:
    report = loocv(_prepared_panel(opts), _recipe(opts), jobs=opts["jobs"])
    _write(opts["out"] / "report.json", report.to_json())
    _write(opts["out"] / "report.csv", report.to_csv())
    return EXIT_FAILED_FOLDS if report.n_failed else EXIT_OK


def cmd_grid(opts) -> int:
    grid = {}
    for flag, field in GRID_PARAMS.items():
        values = opts.get(flag)
        if isinstance(values, list):
            grid[field] = values
    if not grid:
        raise ValueError("grid needs at least one list-valued hyperparameter flag, e.g. --ntrees 50,100")
    base = _recipe({**opts, **{k: DEFAULTS[k] for k in GRID_PARAMS if isinstance(opts.get(k), list)}})
    table = grid_search(_prepared_panel(opts), base, grid, jobs=opts["jobs"])
    _write(opts["out"] / "grid.csv", table.to_csv())
    return EXIT_FAILED_FOLDS if any(row.failures for row in table.rows) else EXIT_OK


def cmd_importance(opts) -> int:
    recipe = _recipe(opts)
    if recipe.tag == "physics_only":
        raise ValueError("physics_only has no corrective model to inspect")
    panel = _prepared_panel(opts)
    fitted = fit_recipe(recipe, panel)
    design = assemble_design(panel, fitted.features, response=recipe.response, encoders=fitted.encoders)
    scores = {
        feature: variable_importance(fitted.model, design, feature, seed=opts["seed"])
        for feature in fitted.features
    }
    _write_json(opts["out"] / "importance.json", {"recipe": recipe.tag, "importance": scores})
    return EXIT_OK


def cmd_synth(opts) -> int:
    fields = set(SyntheticConfig.__dataclass_fields__) - {"vehicle", "n_trips", "samples_per_trip", "seed"}
    extra = {k: opts[k] for k in fields if k in opts}
    config = SyntheticConfig(
        n_trips=opts["trips"], samples_per_trip=opts["samples"], seed=opts["seed"], vehicle=_vehicle(opts), **extra
    )
    panel, truth = generate_synthetic(config)
    save_panel(panel, opts["out"] / "panel")
    _write_json(
        opts["out"] / "truth.json",
        {
            trip_id: {
                "intercept": part.intercept,
                "terminal_time_effect": float(part.time_effect[-1]),
                "terminal_temp_effect": float(part.temp_effect[-1]),
                "terminal_residual": float(part.residual[-1]),
            }
            for trip_id, part in truth.items()
        },
    )
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest,
    "simulate": cmd_simulate,
    "icc": cmd_icc,
    "fit": cmd_fit,
    "evaluate": cmd_evaluate,
    "grid": cmd_grid,
    "importance": cmd_importance,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        opts = _resolve(args)
        if "recipe" in vars(args) and opts["recipe"] not in RECIPES:
            parser.error(f"unknown recipe {opts['recipe']!r}; choose from {', '.join(RECIPES)}")
        return COMMANDS[args.command](opts)
    except (HybridBEVError, OSError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
