"""
Trajectory extraction
Line-by-line matching inside a velocity-bounded column window, refit by least-squares
polynomials after every accepted point, and truck/car classification
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial
from pydantic import BaseModel, ConfigDict, Field, model_validator

from core.detect import EntryEvent, Peak
from core.waterfall import WaterfallMatrix

logger = logging.getLogger("Track")

KMH_PER_MPS = 3.6
# tolerance on column offsets that land exactly on an integer
_WINDOW_EPS = 1e-9


class TrackConfig(BaseModel):
    """Tracking loop parameters (speeds in km/h)"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    v_min_init: float = Field(60.0, gt=0)
    v_max_init: float = Field(120.0, gt=0)
    confidence_cof: float = Field(0.2, ge=0, lt=1)
    fit_order_M: int = Field(1, ge=0)
    fit_window: Optional[int] = Field(None, ge=1)  # None = all points
    max_coast: int = Field(3, ge=0)
    amplitude_floor: float = Field(0.02, ge=0)
    direction: Literal[1, -1] = 1

    @model_validator(mode="after")
    def _ordered_interval(self):
        if not self.v_min_init < self.v_max_init:
            raise ValueError(f"v_min_init ({self.v_min_init}) must be below v_max_init ({self.v_max_init})")
        return self

    @property
    def initial_interval(self) -> Tuple[float, float]:
        if self.direction == 1:
            return self.v_min_init, self.v_max_init
        return -self.v_max_init, -self.v_min_init


class ClassifyConfig(BaseModel):
    """Truck thresholds: mean key-point amplitude and entry peak width (rows)"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    peak_thresh: float = Field(0.5, ge=0)
    width_thresh: float = Field(3, ge=0)


class WindowExit(ValueError):
    """Search window fell outside the matrix"""


@dataclass
class Trajectory:
    """Key points of one vehicle with its fitted motion model"""
    vehicle_id: int
    rows: np.ndarray
    cols: np.ndarray
    coefficients: np.ndarray  # ascending powers of row
    fitted_velocity_kmh: float
    residual_rms: float
    vehicle_class: str
    dt: float
    dx: float
    t0: float = 0.0
    x0: float = 0.0
    entry_peak: Optional[Peak] = None

    @property
    def single_point(self) -> bool:
        return len(self.rows) == 1

    @property
    def polynomial(self) -> Polynomial:
        return Polynomial(self.coefficients)

    def fitted_col(self, row):
        return self.polynomial(row)

    def time_of_row(self, row):
        return self.t0 + np.asarray(row) * self.dt

    def position_m_at(self, time: float) -> float:
        """Fitted position at an absolute time"""
        return float(self.x0 + self.dx * self.fitted_col((time - self.t0) / self.dt))

    def speed_kmh_at(self, row: float) -> float:
        """Instantaneous fitted speed (signed) from the polynomial derivative"""
        return float(self.polynomial.deriv()(row)) * self.dx / self.dt * KMH_PER_MPS if len(self.coefficients) > 1 else 0.0

    def crossing_rows(self, col: float, margin: float = 0.5) -> List[float]:
        """Rows (fractional) at which the fitted path passes a column, within the observed span"""
        if len(self.coefficients) < 2:
            return []
        lo, hi = self.rows[0] - margin, self.rows[-1] + margin
        roots = (self.polynomial - col).roots()
        real = sorted(float(r.real) for r in np.atleast_1d(roots) if abs(r.imag) < 1e-9)
        return [r for r in real if lo <= r <= hi]


def polyfit(points: Sequence[Tuple[float, float]], order_M: int) -> np.ndarray:
    """Least-squares coefficients (ascending) of x = sum w_k t^k over (t, x) pairs"""
    if order_M < 0:
        raise ValueError(f"order must be non-negative, got {order_M}")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    t, x = pts[:, 0], pts[:, 1]
    if len(np.unique(t)) < order_M + 1:
        raise ValueError(f"rank deficient: {len(np.unique(t))} distinct abscissae for order {order_M}")

    design = np.vander(t, order_M + 1, increasing=True)
    coefficients, _, rank, _ = np.linalg.lstsq(design, x, rcond=None)
    if rank < order_M + 1:
        raise ValueError(f"rank deficient design matrix (rank {rank})")
    return coefficients


def fit_residual_rms(points: Sequence[Tuple[float, float]], coefficients: np.ndarray) -> float:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    residual = Polynomial(coefficients)(pts[:, 0]) - pts[:, 1]
    return float(np.sqrt(np.mean(residual ** 2)))


def column_offsets(m: WaterfallMatrix, v_lo: float, v_hi: float) -> Tuple[int, int]:
    """Per-row column offset bounds for a speed interval in km/h"""
    per_row = m.dt / m.dx / KMH_PER_MPS
    return math.floor(v_lo * per_row + _WINDOW_EPS), math.ceil(v_hi * per_row - _WINDOW_EPS)


def search_window(m: WaterfallMatrix, prev_col: int, v_lo: float, v_hi: float) -> Tuple[int, int]:
    """Inclusive column range searched on the next row, clamped to the matrix"""
    x_min, x_max = column_offsets(m, v_lo, v_hi)
    lo = max(prev_col + x_min, 0)
    hi = min(prev_col + x_max, m.n - 1)
    if lo > hi:
        raise WindowExit(f"window [{prev_col + x_min}, {prev_col + x_max}] outside [0, {m.n - 1}]")
    return lo, hi


def match_step(m: WaterfallMatrix, prev_col: int, v_lo: float, v_hi: float, row: int) -> int:
    """Column of the row maximum inside the speed window (lowest column on ties)"""
    if not 0 <= row < m.m:
        raise ValueError(f"row {row} out of range [0, {m.m})")
    lo, hi = search_window(m, prev_col, v_lo, v_hi)
    return lo + int(np.argmax(m.values[row, lo:hi + 1]))


def classify_vehicle(traj: Trajectory, m: WaterfallMatrix, peak_thresh: float = 0.5, width_thresh: float = 3) -> str:
    """truck iff mean key-point amplitude > peak_thresh and entry peak width > width_thresh"""
    if len(traj.rows) == 0:
        raise ValueError(f"trajectory {traj.vehicle_id} has no key points")
    mean_amplitude = float(np.mean(m.values[traj.rows, traj.cols]))
    width = traj.entry_peak.width if traj.entry_peak is not None else 0
    return "truck" if mean_amplitude > peak_thresh and width > width_thresh else "car"


def _fit(rows: List[int], cols: List[int], order_M: int) -> np.ndarray:
    points = list(zip(rows, cols))
    return polyfit(points, min(order_M, len(points) - 1))


def _velocity_kmh(m: WaterfallMatrix, coefficients: np.ndarray, row: float) -> float:
    if len(coefficients) < 2:
        return 0.0
    return float(Polynomial(coefficients).deriv()(row)) * m.dx / m.dt * KMH_PER_MPS


def _grow(m: WaterfallMatrix, event: EntryEvent, cfg: TrackConfig) -> Tuple[List[int], List[int]]:
    rows, cols, amplitudes = [event.entry_row], [event.entry_col], [m.values[event.entry_row, event.entry_col]]
    coast = 0
    row = event.entry_row
    while row + 1 < m.m:
        row += 1
        if len(rows) == 1:
            v_lo, v_hi = cfg.initial_interval
        else:
            window = cfg.fit_window or len(rows)
            coefficients = _fit(rows[-window:], cols[-window:], cfg.fit_order_M)
            v = _velocity_kmh(m, coefficients, rows[-1])
            v_lo, v_hi = sorted(((1 - cfg.confidence_cof) * v, (1 + cfg.confidence_cof) * v))
        try:
            col = match_step(m, cols[-1], v_lo, v_hi, row)
        except WindowExit:
            break

        rows.append(row)
        cols.append(col)
        amplitudes.append(m.values[row, col])
        coast = coast + 1 if amplitudes[-1] < cfg.amplitude_floor else 0
        if coast > cfg.max_coast:
            break

    # sub-floor tail is fade-out, not vehicle
    while len(rows) > 1 and amplitudes[-1] < cfg.amplitude_floor:
        rows.pop()
        cols.pop()
        amplitudes.pop()
    return rows, cols


def extract_trajectories(m: WaterfallMatrix, events: List[EntryEvent], cfg: TrackConfig = TrackConfig(),
                         classify: ClassifyConfig = ClassifyConfig()) -> List[Trajectory]:
    """One fitted, classified trajectory per entry event, in entry-row order"""
    trajectories = []
    for event in sorted(events, key=lambda e: e.entry_row):
        if not (0 <= event.entry_row < m.m and 0 <= event.entry_col < m.n):
            raise ValueError(f"event {event.vehicle_id} lies outside the matrix")

        rows, cols = _grow(m, event, cfg)
        coefficients = _fit(rows, cols, cfg.fit_order_M)
        if len(rows) > 1:
            # mean slope over the span; equals the fitted slope for M = 1
            fitted = Polynomial(coefficients)
            slope = (fitted(rows[-1]) - fitted(rows[0])) / (rows[-1] - rows[0])
            velocity = float(slope) * m.dx / m.dt * KMH_PER_MPS
        else:
            velocity = 0.0
            logger.warning(f"Vehicle {event.vehicle_id}: trajectory terminated at its entry point")

        traj = Trajectory(
            vehicle_id=event.vehicle_id,
            rows=np.array(rows, dtype=int),
            cols=np.array(cols, dtype=int),
            coefficients=coefficients,
            fitted_velocity_kmh=velocity,
            residual_rms=fit_residual_rms(list(zip(rows, cols)), coefficients),
            vehicle_class="car",
            dt=m.dt,
            dx=m.dx,
            t0=m.t0,
            x0=m.x0,
            entry_peak=event.peak,
        )
        traj.vehicle_class = classify_vehicle(traj, m, classify.peak_thresh, classify.width_thresh)
        logger.debug(f"Vehicle {traj.vehicle_id}: {len(rows)} points, {velocity:.2f} km/h, {traj.vehicle_class}")
        trajectories.append(traj)

    logger.info(f"Extracted {len(trajectories)} trajectories from {len(events)} events")
    return trajectories
