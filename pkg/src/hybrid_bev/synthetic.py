"""Synthetic trip panels with known residual structure.

Each trip gets a random speed and elevation profile and a trip-level
climate (seasonality, weather, ambient temperature).  The recorded energy
is the physics prediction plus planted components:

    measured = physics + amp_time * s_time(t) + amp_temp * s_temp(T_amb)
               + b_i + eps,     b_i ~ N(0, sigma_b^2), eps ~ N(0, sigma_eps^2)

so ``residual_phy`` of a trip has a known smooth part, a trip intercept and
white noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import PanelDataset, TripSeries, diff_elevation
from .physics import VehicleSpec, simulate_trip

SEASONS = {"summer": 20.0, "winter": 3.0}
WEATHER = ("cloudy", "rainy", "sunny")


def s_time(t, scale: float) -> np.ndarray:
    """Saturating time effect, 0 at trip start and close to 1 after ``scale`` s."""
    return 1.0 - np.exp(-3.0 * np.asarray(t, dtype=np.float64) / scale)


def s_temp(temp) -> np.ndarray:
    """Climate-control effect: quadratic in the distance from 20 degC, 1 at 5 degC."""
    return ((np.asarray(temp, dtype=np.float64) - 20.0) / 15.0) ** 2


@dataclass(frozen=True)
class SyntheticConfig:
    """Generator settings; energies in J.

    The default amplitudes put the physics-only terminal error of a
    50 x 200 panel at roughly a third of the trip energy.  The trip
    intercept is about a tenth of the terminal energy, an error floor no
    corrector can remove.
    """

    n_trips: int = 50
    samples_per_trip: int = 200
    dt: float = 10.0
    sigma_b: float = 2.0e6
    sigma_eps: float = 2.0e5
    amp_time: float = 4.0e6
    amp_temp: float = 4.0e6
    seed: int = 0
    vehicle: VehicleSpec = field(default_factory=VehicleSpec)

    def __post_init__(self):
        if self.n_trips < 1 or self.samples_per_trip < 2:
            raise ValueError("need n_trips >= 1 and samples_per_trip >= 2")
        if self.sigma_b < 0 or self.sigma_eps < 0:
            raise ValueError("standard deviations must be non-negative")
        if self.dt <= 0:
            raise ValueError("dt must be positive")


@dataclass(frozen=True)
class TripTruth:
    physics: np.ndarray
    time_effect: np.ndarray
    temp_effect: np.ndarray
    intercept: float
    noise: np.ndarray

    @property
    def residual(self) -> np.ndarray:
        return self.time_effect + self.temp_effect + self.intercept + self.noise


def _smooth_noise(rng, n: int, phi: float) -> np.ndarray:
    e = rng.normal(size=n)
    out = np.empty(n)
    acc = 0.0
    for j in range(n):
        acc = phi * acc + e[j]
        out[j] = acc
    return out * np.sqrt(1.0 - phi * phi)


def generate_synthetic(config: SyntheticConfig = SyntheticConfig()) -> tuple[PanelDataset, dict[str, TripTruth]]:
    """Draw a panel and return it with the hidden components of every trip."""
    rng = np.random.default_rng(config.seed)
    n = config.samples_per_trip
    t = np.arange(n) * config.dt
    horizon = t[-1]
    trips, truth = [], {}
    for i in range(config.n_trips):
        trip_id = f"trip_{i:03d}"
        season = str(rng.choice(list(SEASONS)))
        weather = str(rng.choice(WEATHER))
        base_temp = SEASONS[season] + rng.normal(0.0, 5.0)
        temp = base_temp + 0.5 * np.sin(2 * np.pi * t / horizon + rng.uniform(0, 2 * np.pi))

        cruise = rng.uniform(40.0, 90.0)
        speed = np.clip(cruise + 15.0 * _smooth_noise(rng, n, 0.9), 0.0, 130.0)
        speed[0] = 0.0
        elevation = 400.0 + np.cumsum(1.5 * _smooth_noise(rng, n, 0.8))

        physics = simulate_trip(config.vehicle, t, speed, elevation).predicted_energy
        te = config.amp_time * s_time(t, horizon)
        ce = config.amp_temp * s_temp(temp)
        b = float(rng.normal(0.0, config.sigma_b)) if config.sigma_b > 0 else 0.0
        eps = rng.normal(0.0, config.sigma_eps, size=n) if config.sigma_eps > 0 else np.zeros(n)
        component = TripTruth(physics, te, ce, b, eps)
        trip = TripSeries(
            trip_id,
            t,
            {
                "velocity": speed,
                "elevation": elevation,
                "ambient_temp": temp,
                "measured_energy": physics + component.residual,
            },
            {"seasonality": season, "weather": weather, "route": f"route_{i % 5}"},
        )
        trips.append(trip.with_channels(diff_elevation=diff_elevation(trip)))
        truth[trip_id] = component
    return PanelDataset(tuple(trips)), truth
