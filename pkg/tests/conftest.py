import numpy as np
import pytest

from hybrid_bev.dataset import PanelDataset, TripSeries

# Lines recorded by the acceptance module, echoed in the terminal summary so
# they survive output capturing.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_trip(trip_id="a", n=5, dt=1.0, attributes=None, **channels):
    t = np.arange(n) * dt
    base = {"velocity": np.full(n, 36.0), "elevation": np.zeros(n)}
    base.update({k: np.asarray(v, dtype=float) for k, v in channels.items()})
    return TripSeries(trip_id, t, base, attributes or {})


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def two_trip_panel():
    a = make_trip("a", 3, ambient_temp=[10, 11, 12], attributes={"seasonality": "summer", "weather": "sunny"})
    b = make_trip("b", 3, ambient_temp=[0, 1, 2], attributes={"seasonality": "winter", "weather": "rainy"})
    return PanelDataset((a, b))


def make_design(columns, response=None, subjects=None):
    """DesignMatrix from a ``{name: values}`` mapping of numeric columns."""
    from hybrid_bev.dataset import DesignMatrix

    names = tuple(columns)
    rows = np.column_stack([np.asarray(columns[c], dtype=float) for c in names])
    n = rows.shape[0]
    subj = np.asarray(["s0"] * n if subjects is None else [str(s) for s in subjects], dtype=object)
    y = None if response is None else np.asarray(response, dtype=float)
    return DesignMatrix(rows, y, subj, names)
