import numpy as np
import pytest

from core.detect import EntryEvent, Peak
from core.forward_sim import FiberLayout, Medium
from core.track import Trajectory
from core.waterfall import WaterfallMatrix


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def medium():
    return Medium()


@pytest.fixture
def fiber():
    return FiberLayout()


@pytest.fixture
def small_matrix():
    return WaterfallMatrix(np.array([[0.0, 1.0, 2.0], [3.0, 4.0, 5.0]]), dt=1.0, dx=0.8)


@pytest.fixture
def make_ridge():
    """Matrix with Gaussian ridges centered on given per-row column paths"""
    def _make(rows, cols, paths, sigma=1.0, amplitude=1.0, dt=0.1, dx=0.8):
        grid = np.arange(cols)[None, :]
        values = np.zeros((rows, cols))
        for path in paths:
            centers = np.asarray(path, dtype=float)[:, None]
            values = np.maximum(values, amplitude * np.exp(-0.5 * ((grid - centers) / sigma) ** 2))
        return WaterfallMatrix(values, dt, dx)
    return _make


@pytest.fixture
def make_trajectory():
    """Straight-line trajectory passing column 0 at entry_time with constant speed"""
    def _make(vehicle_id, speed_kmh, entry_time, rows=600, dt=0.1, dx=0.8, vehicle_class="car"):
        slope = speed_kmh / 3.6 * dt / dx
        first = int(round(entry_time / dt))
        row_index = np.arange(first, first + rows)
        intercept = -slope * entry_time / dt
        return Trajectory(
            vehicle_id=vehicle_id,
            rows=row_index,
            cols=np.rint(intercept + slope * row_index).astype(int),
            coefficients=np.array([intercept, slope]),
            fitted_velocity_kmh=speed_kmh,
            residual_rms=0.0,
            vehicle_class=vehicle_class,
            dt=dt,
            dx=dx,
            entry_peak=Peak(index=first, height=1.0, width=2),
        )
    return _make


@pytest.fixture
def make_event():
    def _make(vehicle_id, row, col=0, width=2, height=1.0, dt=0.1):
        return EntryEvent(vehicle_id, row, col, row * dt, Peak(index=row, height=height, width=width))
    return _make
