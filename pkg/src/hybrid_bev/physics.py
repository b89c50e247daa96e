"""Point-mass longitudinal vehicle model driving a quasi-static battery.

The chain per sample is

    velocity, acceleration, grade -> tractive power at the wheels
    -> battery terminal power (drivetrain losses, partial recuperation)
    -> current and terminal voltage of a pack with linear OCV(SOC) and a
       constant internal resistance -> SOC update.

Predicted cumulative energy is accumulated from ``I * V * dt`` with the same
quadrature as the measured energy so the two are directly comparable.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Mapping

import numpy as np

from .dataset import cumulative_energy, time_steps
from .errors import PowerLimitError

AIR_DENSITY = 1.2041  # kg/m^3, dry air at 20 degC
GRAVITY = 9.81  # m/s^2
MIN_RUN = 0.1  # m; below this horizontal distance the grade is taken as 0


@dataclass(frozen=True)
class BatterySpec:
    """High-voltage pack built from identical cells.

    ``ocv_at_full``/``ocv_at_empty`` and ``internal_resistance`` are per cell;
    the pack scales them by the series/parallel layout.
    """

    cell_capacity: float = 120.0  # Ah
    cells_series: int = 96
    cells_parallel: int = 1
    pack_mass: float = 450.0  # kg
    ocv_at_full: float = 4.15  # V
    ocv_at_empty: float = 3.30  # V
    internal_resistance: float = 1.0e-3  # ohm

    def __post_init__(self):
        if self.cells_series < 1 or self.cells_parallel < 1:
            raise ValueError("cell counts must be >= 1")
        if not self.ocv_at_full > self.ocv_at_empty > 0:
            raise ValueError("need ocv_at_full > ocv_at_empty > 0")
        if self.cell_capacity <= 0 or self.internal_resistance < 0:
            raise ValueError("capacity must be positive and resistance non-negative")

    @property
    def pack_resistance(self) -> float:
        return self.internal_resistance * self.cells_series / self.cells_parallel

    @property
    def capacity_coulomb(self) -> float:
        return 3600.0 * self.cell_capacity * self.cells_parallel

    def open_circuit_voltage(self, soc: float) -> float:
        per_cell = self.ocv_at_empty + soc * (self.ocv_at_full - self.ocv_at_empty)
        return per_cell * self.cells_series


# Labels of the published specification table, accepted as JSON keys.
_TABLE_ALIASES = {
    "Vehicle mass in kg": "mass",
    "Wheel diameter in m": "wheel_diameter",
    "Drag coefficient": "drag_coefficient",
    "Number of wheels": "n_wheels",
    "Rotational mass ratio": "rotational_mass_ratio",
    "Battery cell capacity in Ah": "cell_capacity",
    "Battery mass in kg": "pack_mass",
    "Number of cells in battery in parallel": "cells_parallel",
    "Number of cells in battery in series": "cells_series",
}


@dataclass(frozen=True)
class VehicleSpec:
    """Vehicle parameters; defaults follow a 2014 BMW i3 (60 Ah).

    ``mass`` is the total vehicle mass used in the dynamics.
    ``rotational_mass_ratio`` is a percentage added to the inertial mass.
    ``wheel_diameter`` and ``n_wheels`` are carried for completeness; the
    point-mass model does not need them.
    """

    mass: float = 1345.0
    wheel_diameter: float = 0.6996
    drag_coefficient: float = 0.22
    frontal_area: float = 2.38
    rolling_resistance_coeff: float = 0.01
    rotational_mass_ratio: float = 5.0
    n_wheels: int = 4
    drivetrain_efficiency: float = 0.9
    recuperation_fraction: float = 0.5
    battery: BatterySpec = field(default_factory=BatterySpec)

    def __post_init__(self):
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if not 0.0 <= self.recuperation_fraction <= 1.0:
            raise ValueError("recuperation_fraction must lie in [0, 1]")
        if not 0.0 < self.drivetrain_efficiency <= 1.0:
            raise ValueError("drivetrain_efficiency must lie in (0, 1]")

    def with_recuperation(self, fraction: float) -> "VehicleSpec":
        return replace(self, recuperation_fraction=fraction)

    @classmethod
    def from_dict(cls, data: Mapping) -> "VehicleSpec":
        flat = {_TABLE_ALIASES.get(k, k): v for k, v in data.items() if k != "battery"}
        battery_keys = set(BatterySpec.__dataclass_fields__)
        battery = {k: flat.pop(k) for k in list(flat) if k in battery_keys}
        battery.update({_TABLE_ALIASES.get(k, k): v for k, v in data.get("battery", {}).items()})
        unknown = set(flat) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown vehicle spec key(s): {sorted(unknown)}")
        return cls(**flat, battery=BatterySpec(**battery))

    @classmethod
    def from_json(cls, path: str | Path) -> "VehicleSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)


def tractive_power(spec: VehicleSpec, v, a, grade):
    """Power at the wheels in W for speed ``v`` (m/s), acceleration ``a``
    (m/s^2) and road grade (rise over run)."""
    v = np.asarray(v, dtype=np.float64)
    theta = np.arctan(grade)
    m = spec.mass
    force = (
        0.5 * AIR_DENSITY * spec.drag_coefficient * spec.frontal_area * v * v
        + spec.rolling_resistance_coeff * m * GRAVITY * np.cos(theta)
        + m * GRAVITY * np.sin(theta)
        + m * (1.0 + spec.rotational_mass_ratio / 100.0) * np.asarray(a, dtype=np.float64)
    )
    out = v * force
    return float(out) if out.ndim == 0 else out


def wheel_to_battery(spec: VehicleSpec, p_tractive):
    """Map wheel power to battery terminal power.

    Traction is divided by the drivetrain efficiency; braking power is
    returned scaled by efficiency and the recuperation fraction.
    """
    p = np.asarray(p_tractive, dtype=np.float64)
    eta = spec.drivetrain_efficiency
    out = np.where(p >= 0.0, p / eta, p * eta * spec.recuperation_fraction)
    return float(out) if out.ndim == 0 else out


def _solve_current(ocv: float, resistance: float, p_batt: float, sample=None) -> float:
    # P = (Voc - I R) I ; the root continuous with P/Voc as R -> 0
    disc = ocv * ocv - 4.0 * resistance * p_batt
    if disc < 0.0:
        where = "" if sample is None else f" at sample {sample}"
        raise PowerLimitError(
            f"battery cannot deliver {p_batt:.1f} W{where} "
            f"(limit {ocv * ocv / (4.0 * resistance):.1f} W)",
            sample,
        )
    return 2.0 * p_batt / (ocv + math.sqrt(disc))


def battery_step(soc: float, spec: VehicleSpec, p_batt: float, dt: float, sample=None):
    """Advance the pack by ``dt`` seconds at terminal power ``p_batt``.

    Returns ``(new_soc, current, voltage)``; positive current discharges.
    """
    if not 0.0 <= soc <= 1.0:
        raise ValueError("soc must lie in [0, 1]")
    if dt <= 0:
        raise ValueError("dt must be positive")
    battery = spec.battery
    ocv = battery.open_circuit_voltage(soc)
    current = _solve_current(ocv, battery.pack_resistance, float(p_batt), sample)
    voltage = ocv - current * battery.pack_resistance
    new_soc = min(1.0, max(0.0, soc - current * dt / battery.capacity_coulomb))
    return new_soc, current, voltage


@dataclass(frozen=True)
class SimulationResult:
    current: np.ndarray
    voltage: np.ndarray
    ocv: np.ndarray
    soc: np.ndarray
    tractive_power: np.ndarray
    battery_power: np.ndarray
    predicted_energy: np.ndarray


def simulate_trip(spec: VehicleSpec, t, velocity, elevation, soc0: float = 0.9) -> SimulationResult:
    """Run the vehicle and battery model over one trip.

    ``velocity`` is in km/h, ``elevation`` in m, ``t`` in s.  The battery
    state at sample ``j`` is obtained by stepping over ``t[j] - t[j-1]``;
    sample 0 has zero acceleration and grade and contributes no energy.
    """
    t = np.asarray(t, dtype=np.float64)
    v = np.asarray(velocity, dtype=np.float64) / 3.6
    elevation = np.asarray(elevation, dtype=np.float64)
    if not (t.shape == v.shape == elevation.shape):
        raise ValueError("t, velocity and elevation must have equal length")
    if not 0.0 <= soc0 <= 1.0:
        raise ValueError("soc0 must lie in [0, 1]")
    n = t.size
    dt = time_steps(t)
    accel = np.zeros(n)
    grade = np.zeros(n)
    if n > 1:
        accel[1:] = np.diff(v) / dt[1:]
        run = v[1:] * dt[1:]
        rise = np.diff(elevation)
        ok = run >= MIN_RUN
        grade[1:][ok] = rise[ok] / run[ok]
    p_wheel = np.atleast_1d(tractive_power(spec, v, accel, grade))
    p_batt = np.atleast_1d(wheel_to_battery(spec, p_wheel))

    battery = spec.battery
    resistance = battery.pack_resistance
    current = np.empty(n)
    voltage = np.empty(n)
    ocv = np.empty(n)
    soc = np.empty(n)
    state = soc0
    for j in range(n):
        ocv[j] = battery.open_circuit_voltage(state)
        if j == 0:
            current[j] = _solve_current(ocv[j], resistance, p_batt[j], j)
            voltage[j] = ocv[j] - current[j] * resistance
        else:
            state, current[j], voltage[j] = battery_step(state, spec, p_batt[j], dt[j], j)
        soc[j] = state
    energy = cumulative_energy(current * voltage, t)
    return SimulationResult(current, voltage, ocv, soc, p_wheel, p_batt, energy)


def simulate_panel_trip(spec: VehicleSpec, trip, soc0: float = 0.9) -> SimulationResult:
    return simulate_trip(spec, trip.t, trip["velocity"], trip["elevation"], soc0)
