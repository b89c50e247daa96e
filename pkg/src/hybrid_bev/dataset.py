"""Panel data model for trip time series and the preprocessing applied to it.

A trip is one subject of the longitudinal panel; its samples are the
repeated measurements.  Every trip carries a strictly increasing time
channel (seconds from trip start), any number of numeric channels of the
same length, and trip-level categorical attributes (seasonality, weather,
route).
"""

from __future__ import annotations

import dataclasses
import io
import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import (
    AlignmentError,
    ChannelMissingError,
    DataError,
    DegenerateTripError,
    ImputationError,
    SchemaError,
)

log = logging.getLogger(__name__)

TIME = "t"
MANDATORY_ROLES = ("time", "velocity", "elevation")
NUMERIC_ROLES = frozenset(
    {
        "velocity",
        "elevation",
        "ambient_temp",
        "battery_current",
        "battery_voltage",
        "battery_temp",
        "heating_power",
        "ac_power",
        "soc",
        "measured_energy",
        "phys_pred",
        "residual_phy",
        "diff_elevation",
    }
)
CATEGORICAL_ROLES = frozenset({"seasonality", "weather", "route"})

# Column names of the public TUM recordings mapped onto semantic roles.
TUM_SCHEMA = {
    "Time": "time",
    "Trip.id": "trip_id",
    "Seasonality": "seasonality",
    "Weather": "weather",
    "Velocity": "velocity",
    "Elevation": "elevation",
    "Battery temperature": "battery_temp",
    "Requested heating power": "heating_power",
    "Air conditioner power": "ac_power",
    "Ambient temperature": "ambient_temp",
    "Battery current": "battery_current",
    "Battery voltage": "battery_voltage",
}


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TripSeries:
    """One trip: aligned channels sampled at the instants ``t``.

    Parameters
    ----------
    trip_id : str
        Subject identifier.
    t : array_like
        Seconds from trip start, strictly increasing.
    channels : mapping of str to array_like
        Numeric per-sample channels, each the same length as ``t``.
    attributes : mapping of str to str
        Trip-level categorical values (``seasonality``, ``weather``, ``route``).
    """

    trip_id: str
    t: np.ndarray
    channels: Mapping[str, np.ndarray] = field(default_factory=dict)
    attributes: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        t = _frozen(self.t)
        if t.ndim != 1:
            raise DataError(f"trip {self.trip_id}: time must be one-dimensional")
        if not np.all(np.isfinite(t)):
            raise DataError(f"trip {self.trip_id}: time contains missing values")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise DataError(f"trip {self.trip_id}: time is not strictly increasing")
        channels = {}
        for name, values in self.channels.items():
            arr = _frozen(values)
            if arr.shape != t.shape:
                raise AlignmentError(
                    f"trip {self.trip_id}: channel {name!r} has length {arr.size}, "
                    f"time has {t.size}"
                )
            channels[name] = arr
        object.__setattr__(self, "trip_id", str(self.trip_id))
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "channels", MappingProxyType(channels))
        object.__setattr__(
            self, "attributes", MappingProxyType({k: str(v) for k, v in self.attributes.items()})
        )

    def __len__(self) -> int:
        return self.t.size

    def __getitem__(self, name: str) -> np.ndarray:
        if name in (TIME, "time"):
            return self.t
        try:
            return self.channels[name]
        except KeyError:
            raise ChannelMissingError(
                f"trip {self.trip_id} has no channel {name!r}"
            ) from None

    def has(self, name: str) -> bool:
        return name in (TIME, "time") or name in self.channels

    def with_channels(self, **new: np.ndarray) -> "TripSeries":
        """Return a copy with channels added or replaced."""
        return TripSeries(self.trip_id, self.t, {**self.channels, **new}, self.attributes)

    def take(self, index) -> "TripSeries":
        """Return the trip restricted to ``index`` (slice or integer array)."""
        return TripSeries(
            self.trip_id,
            self.t[index],
            {k: v[index] for k, v in self.channels.items()},
            self.attributes,
        )


@dataclass(frozen=True)
class PanelDataset:
    """An ordered, non-empty collection of trips with unique ids."""

    trips: tuple[TripSeries, ...]

    def __post_init__(self):
        trips = tuple(self.trips)
        if not trips:
            raise DataError("a panel needs at least one trip")
        index = {}
        for trip in trips:
            if trip.trip_id in index:
                raise DataError(f"duplicate trip id {trip.trip_id!r}")
            index[trip.trip_id] = trip
        object.__setattr__(self, "trips", trips)
        object.__setattr__(self, "_index", MappingProxyType(index))

    @property
    def subject_index(self) -> Mapping[str, TripSeries]:
        return self._index

    @property
    def trip_ids(self) -> list[str]:
        return [trip.trip_id for trip in self.trips]

    @property
    def n_observations(self) -> int:
        return sum(len(trip) for trip in self.trips)

    def __len__(self) -> int:
        return len(self.trips)

    def __iter__(self) -> Iterator[TripSeries]:
        return iter(self.trips)

    def __getitem__(self, trip_id: str) -> TripSeries:
        return self._index[trip_id]

    def map(self, fn) -> "PanelDataset":
        return PanelDataset(tuple(fn(trip) for trip in self.trips))

    def without(self, trip_ids: Iterable[str]) -> "PanelDataset":
        drop = set(trip_ids)
        return PanelDataset(tuple(t for t in self.trips if t.trip_id not in drop))

    def only(self, trip_ids: Iterable[str]) -> "PanelDataset":
        keep = set(trip_ids)
        return PanelDataset(tuple(t for t in self.trips if t.trip_id in keep))


# --------------------------------------------------------------------------
# Ingestion
# --------------------------------------------------------------------------


def parse_trip_csv(
    data: bytes,
    schema: Mapping[str, str],
    trip_id: str | None = None,
    attributes: Mapping[str, str] | None = None,
) -> TripSeries:
    """Parse one trip from CSV bytes.

    ``schema`` maps CSV column names to semantic roles (see ``TUM_SCHEMA``).
    Mapped optional columns that the file lacks are skipped; the mandatory
    roles (time, velocity, elevation) must be present.
    """
    try:
        frame = pd.read_csv(io.BytesIO(data), encoding="utf-8")
    except (pd.errors.EmptyDataError, pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise DataError(f"unreadable CSV: {exc}") from exc

    by_role: dict[str, str] = {}
    for column, role in schema.items():
        if column in frame.columns:
            by_role[role] = column
    missing = [r for r in MANDATORY_ROLES if r not in by_role]
    if missing:
        raise SchemaError(f"missing mandatory column(s) for role(s): {', '.join(missing)}")

    def numeric(role):
        column = by_role[role]
        try:
            return pd.to_numeric(frame[column], errors="raise").to_numpy(dtype=np.float64)
        except (ValueError, TypeError) as exc:
            raise DataError(f"column {column!r} is not numeric: {exc}") from exc

    t = numeric("time")
    if not np.all(np.isfinite(t)):
        raise DataError("time column has missing values")
    if t.size > 1 and not np.all(np.diff(t) > 0):
        raise DataError("time column is not strictly increasing")
    t = t - t[0] if t.size else t

    channels = {
        role: numeric(role) for role in by_role if role in NUMERIC_ROLES
    }
    attrs = dict(attributes or {})
    for role in CATEGORICAL_ROLES:
        if role in by_role and role not in attrs:
            values = frame[by_role[role]].dropna().astype(str).unique()
            if len(values) > 1:
                raise DataError(f"categorical {role!r} varies within a trip: {list(values)}")
            if len(values) == 1:
                attrs[role] = values[0]
    if trip_id is None:
        if "trip_id" in by_role:
            ids = frame[by_role["trip_id"]].dropna().astype(str).unique()
            if len(ids) != 1:
                raise DataError("trip id column must hold exactly one id per file")
            trip_id = ids[0]
        else:
            raise SchemaError("no trip id given and no trip_id column mapped")
    return TripSeries(trip_id, t, channels, attrs)


# --------------------------------------------------------------------------
# Preprocessing
# --------------------------------------------------------------------------


def downsample(trip: TripSeries, keep_every: int) -> TripSeries:
    """Keep samples 0, k, 2k, ... of every channel."""
    if keep_every < 1:
        raise ValueError("keep_every must be >= 1")
    if keep_every == 1:
        return trip
    out = trip.take(slice(0, None, keep_every))
    if len(out) < 2:
        raise DegenerateTripError(
            f"trip {trip.trip_id} has {len(out)} sample(s) after keeping every {keep_every}th"
        )
    return out


def interpolate_missing(x, t) -> np.ndarray:
    """Fill NaN gaps in ``x`` by linear interpolation in ``t``.

    Leading and trailing gaps take the nearest observed value.
    """
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    known = np.isfinite(x)
    if not known.any():
        raise ImputationError("channel has no observed values")
    if known.all():
        return x.copy()
    out = x.copy()
    out[~known] = np.interp(t[~known], t[known], x[known])
    return out


def interpolate_trip(trip: TripSeries) -> TripSeries:
    filled = {}
    for name, values in trip.channels.items():
        if not np.all(np.isfinite(values)):
            filled[name] = interpolate_missing(values, trip.t)
    return trip.with_channels(**filled) if filled else trip


def diff_elevation(trip: TripSeries) -> np.ndarray:
    """Per-sample elevation change; the first sample is 0."""
    elevation = trip["elevation"]
    out = np.zeros_like(elevation)
    out[1:] = np.diff(elevation)
    return out


def time_steps(t) -> np.ndarray:
    """``dt[j] = t[j] - t[j-1]`` with ``dt[0] = 0``."""
    t = np.asarray(t, dtype=np.float64)
    dt = np.zeros_like(t)
    dt[1:] = np.diff(t)
    return dt


def cumulative_energy(power, t) -> np.ndarray:
    """Accumulate power (W) into energy (J): ``e[j] = sum_{k<=j} p[k] dt[k]``."""
    return np.cumsum(np.asarray(power, dtype=np.float64) * time_steps(t))


def battery_power(trip: TripSeries) -> np.ndarray:
    """Instantaneous battery power ``I * V`` in W."""
    for name in ("battery_current", "battery_voltage"):
        if not trip.has(name):
            raise ChannelMissingError(f"trip {trip.trip_id} has no {name} channel")
    return trip["battery_current"] * trip["battery_voltage"]


def measured_energy(trip: TripSeries) -> np.ndarray:
    """Cumulative energy drawn from the battery, from measured I and V."""
    return cumulative_energy(battery_power(trip), trip.t)


def compute_residual(trip: TripSeries, phys_pred) -> np.ndarray:
    """Measured minus physics-predicted cumulative energy."""
    phys_pred = np.asarray(phys_pred, dtype=np.float64)
    measured = trip["measured_energy"]
    if phys_pred.shape != measured.shape:
        raise AlignmentError(
            f"trip {trip.trip_id}: prediction length {phys_pred.size} != {measured.size}"
        )
    return measured - phys_pred


def detect_charging(
    trip: TripSeries, v_eps: float = 0.1, p_threshold: float = 5000.0
) -> list[tuple[int, int]]:
    """Half-open index ranges where the car stands still while energy flows in.

    A sample qualifies when ``velocity <= v_eps`` and the battery power is at
    or below ``-p_threshold``.  Maximal runs of qualifying samples are returned.
    """
    flag = (trip["velocity"] <= v_eps) & (battery_power(trip) <= -p_threshold)
    if not flag.any():
        return []
    edges = np.diff(np.concatenate(([0], flag.astype(np.int8), [0])))
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1)
    return [(int(a), int(b)) for a, b in zip(starts, stops)]


# --------------------------------------------------------------------------
# Encoding and design assembly
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class OneHot:
    columns: np.ndarray
    levels: tuple[str, ...]
    unseen: bool = False


def _is_missing(value) -> bool:
    return value is None or (isinstance(value, float) and np.isnan(value))


def one_hot(values: Sequence, levels: Sequence[str] | None = None) -> OneHot:
    """Binary indicator columns, one per level, in lexicographic level order.

    When ``levels`` is given (prediction time), values outside it encode as an
    all-zero row and ``unseen`` is set.
    """
    values = list(values)
    if levels is None:
        observed = {str(v) for v in values if not _is_missing(v)}
        if not observed:
            raise DataError("one-hot encoding needs at least one non-missing value")
        levels = tuple(sorted(observed))
    else:
        levels = tuple(levels)
    position = {level: i for i, level in enumerate(levels)}
    columns = np.zeros((len(values), len(levels)))
    unseen = False
    for row, value in enumerate(values):
        j = None if _is_missing(value) else position.get(str(value))
        if j is None:
            unseen = True
        else:
            columns[row, j] = 1.0
    if unseen:
        warnings.warn("categorical level(s) unseen in training encoded as all zeros")
    return OneHot(columns, levels, unseen)


@dataclass(frozen=True)
class DesignMatrix:
    """Row-per-observation design for the corrective models.

    ``groups`` maps each categorical feature to the names of its indicator
    columns; ``encoders`` stores the level order used, so a prediction-time
    design can be built with identical columns.
    """

    rows: np.ndarray
    response: np.ndarray | None
    subject_of_row: np.ndarray
    columns: tuple[str, ...]
    groups: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    encoders: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    unseen: bool = False

    def __post_init__(self):
        n = self.rows.shape[0]
        if self.rows.ndim != 2 or self.rows.shape[1] != len(self.columns):
            raise SchemaError("rows must be 2-D with one column per name")
        if self.response is not None and self.response.shape != (n,):
            raise AlignmentError("response length differs from row count")
        if self.subject_of_row.shape != (n,):
            raise AlignmentError("subject_of_row length differs from row count")

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    def index(self, name: str) -> int:
        try:
            return self.columns.index(name)
        except ValueError:
            raise SchemaError(f"design has no column {name!r}") from None

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.index(name)]

    def feature_columns(self, feature: str) -> list[int]:
        """Column indices of a feature (one, or a whole one-hot group)."""
        if feature in self.groups:
            return [self.index(c) for c in self.groups[feature]]
        return [self.index(feature)]

    def subjects(self) -> list[str]:
        """Distinct subjects in order of first appearance."""
        _, first = np.unique(self.subject_of_row, return_index=True)
        return [str(s) for s in self.subject_of_row[np.sort(first)]]

    def select(self, mask_or_index) -> "DesignMatrix":
        return DesignMatrix(
            self.rows[mask_or_index],
            None if self.response is None else self.response[mask_or_index],
            self.subject_of_row[mask_or_index],
            self.columns,
            self.groups,
            self.encoders,
            self.unseen,
        )

    def replace_rows(self, rows: np.ndarray) -> "DesignMatrix":
        """Same design with the feature values swapped for ``rows``."""
        return dataclasses.replace(self, rows=np.asarray(rows, dtype=np.float64))

    def terminal_rows(self) -> dict[str, int]:
        """Index of the last row of every subject."""
        out = {}
        for i, s in enumerate(self.subject_of_row):
            out[str(s)] = i
        return out


def _feature_source(name: str) -> str:
    return TIME if name in ("time", TIME) else name


def assemble_design(
    panel: PanelDataset,
    features: Sequence[str],
    response: str | None = None,
    encoders: Mapping[str, Sequence[str]] | None = None,
) -> DesignMatrix:
    """Stack all trips into one design matrix.

    Numeric features are per-sample channels (``time`` is the time channel);
    categorical features are trip attributes and are expanded to indicator
    columns named ``feature=level``.
    """
    if not features:
        raise SchemaError("feature list is empty")
    encoders = dict(encoders or {})
    trips = list(panel)
    for trip in trips:
        for name in features:
            if name in CATEGORICAL_ROLES:
                if name not in trip.attributes:
                    raise SchemaError(f"trip {trip.trip_id} lacks attribute {name!r}")
            elif not trip.has(_feature_source(name)):
                raise SchemaError(f"trip {trip.trip_id} lacks channel {name!r}")
        if response is not None and not trip.has(response):
            raise SchemaError(f"trip {trip.trip_id} lacks response channel {response!r}")

    lengths = [len(trip) for trip in trips]
    blocks, columns, groups, used = [], [], {}, {}
    unseen = False
    for name in features:
        if name in CATEGORICAL_ROLES:
            per_row = np.repeat([trip.attributes[name] for trip in trips], lengths)
            enc = one_hot(per_row, encoders.get(name))
            unseen = unseen or enc.unseen
            names = tuple(f"{name}={level}" for level in enc.levels)
            blocks.append(enc.columns)
            columns.extend(names)
            groups[name] = names
            used[name] = enc.levels
        else:
            source = _feature_source(name)
            blocks.append(np.concatenate([trip[source] for trip in trips])[:, None])
            columns.append(name)
    rows = np.hstack(blocks)
    y = None
    if response is not None:
        y = np.concatenate([trip[response] for trip in trips])
    subjects = np.repeat(np.array([trip.trip_id for trip in trips], dtype=object), lengths)
    return DesignMatrix(rows, y, subjects, tuple(columns), groups, used, unseen)


# --------------------------------------------------------------------------
# Serialization
# --------------------------------------------------------------------------

PANEL_FORMAT = "hybrid-bev-panel"


def save_panel(panel: PanelDataset, directory: str | Path) -> Path:
    """Write one CSV per trip plus ``manifest.json``; return the manifest path."""
    directory = Path(directory)
    (directory / "trips").mkdir(parents=True, exist_ok=True)
    entries = []
    for i, trip in enumerate(panel):
        name = f"trips/trip_{i:04d}.csv"
        frame = pd.DataFrame({TIME: trip.t, **{k: v for k, v in sorted(trip.channels.items())}})
        frame.to_csv(directory / name, index=False, float_format="%.17g")
        entries.append(
            {"trip_id": trip.trip_id, "file": name, "attributes": dict(sorted(trip.attributes.items()))}
        )
    manifest = directory / "manifest.json"
    manifest.write_text(
        json.dumps({"format": PANEL_FORMAT, "version": 1, "trips": entries}, indent=2) + "\n"
    )
    return manifest


def load_panel(manifest: str | Path) -> PanelDataset:
    """Read a panel written by :func:`save_panel`."""
    manifest = Path(manifest)
    meta = json.loads(manifest.read_text())
    trips = []
    for entry in meta.get("trips", []):
        frame = pd.read_csv(manifest.parent / entry["file"])
        channels = {c: frame[c].to_numpy(dtype=np.float64) for c in frame.columns if c != TIME}
        trips.append(
            TripSeries(entry["trip_id"], frame[TIME].to_numpy(np.float64), channels, entry.get("attributes", {}))
        )
    if not trips:
        raise DataError(f"manifest {manifest} lists no trips")
    return PanelDataset(tuple(trips))


def read_raw_manifest(manifest: str | Path, schema: Mapping[str, str]) -> list[TripSeries]:
    """Parse every trip listed in a raw-data manifest.

    The manifest is JSON ``{"trips": [{"file": ..., "trip_id": ..., "attributes": {...}}]}``
    with file paths relative to the manifest.  ``trip_id`` may be omitted
    when the schema maps a trip-id column.
    """
    manifest = Path(manifest)
    try:
        meta = json.loads(manifest.read_text())
    except OSError as exc:
        raise OSError(f"cannot read manifest {manifest}: {exc}") from exc
    entries = meta.get("trips", [])
    if not entries:
        raise DataError(f"manifest {manifest} lists no trips")
    trips = []
    for entry in entries:
        path = manifest.parent / entry["file"]
        try:
            data = path.read_bytes()
        except OSError as exc:
            raise OSError(f"cannot read trip file {path}: {exc}") from exc
        trips.append(parse_trip_csv(data, schema, entry.get("trip_id"), entry.get("attributes")))
    return trips


@dataclass
class IngestLog:
    kept: list[str] = field(default_factory=list)
    dropped: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"kept": self.kept, "dropped": self.dropped}


def preprocess(
    trips: Sequence[TripSeries],
    keep_every: int = 1,
    v_eps: float = 0.1,
    p_threshold: float = 5000.0,
) -> tuple[PanelDataset, IngestLog]:
    """Downsample, drop charging trips, interpolate gaps, add elevation change.

    Trips without current/voltage channels cannot be screened for charging
    and are kept.
    """
    out, record = [], IngestLog()
    for trip in trips:
        try:
            trip = downsample(trip, keep_every)
        except DegenerateTripError as exc:
            record.dropped.append({"trip_id": trip.trip_id, "reason": str(exc)})
            continue
        if trip.has("battery_current") and trip.has("battery_voltage"):
            segments = detect_charging(trip, v_eps, p_threshold)
            if segments:
                record.dropped.append(
                    {
                        "trip_id": trip.trip_id,
                        "reason": "battery charging pattern",
                        "segments": [list(s) for s in segments],
                    }
                )
                continue
        try:
            trip = interpolate_trip(trip)
        except ImputationError as exc:
            record.dropped.append({"trip_id": trip.trip_id, "reason": str(exc)})
            continue
        trip = trip.with_channels(diff_elevation=diff_elevation(trip))
        out.append(trip)
        record.kept.append(trip.trip_id)
    if not out:
        raise DataError("every trip was dropped during preprocessing")
    return PanelDataset(tuple(out)), record
