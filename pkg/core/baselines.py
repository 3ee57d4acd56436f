"""
Line-extraction baselines
Hough and Radon transforms over the waterfall image, and scoring of any method's
output against simulator ground truth
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import ndimage

from core.forward_sim import GroundTruth
from core.track import KMH_PER_MPS, Trajectory
from core.waterfall import WaterfallMatrix

logger = logging.getLogger("Baselines")


class BaselineConfig(BaseModel):
    """Hough/Radon parameters and matching tolerances"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    binarize_thresh: float = Field(0.06, gt=0)
    vote_thresh: int = Field(40, gt=0)
    theta_bins: int = Field(180, ge=2)
    rho_bins: Optional[int] = Field(None, ge=2)
    radon_angle_count: int = Field(90, ge=1)
    radon_full_range: bool = False
    radon_v_min_kmh: float = Field(30.0, gt=0)
    radon_v_max_kmh: float = Field(200.0, gt=0)
    radon_min_score_frac: float = Field(0.3, gt=0, le=1)
    tolerance_rows: float = Field(3.0, ge=0)
    tolerance_kmh: float = Field(5.0, ge=0)


@dataclass
class LineCandidate:
    """Straight line col*cos(theta) + row*sin(theta) = rho in pixel coordinates"""
    rho: float
    theta: float
    score: float
    velocity_kmh: float  # inf for a horizontal line (all columns at one instant)
    entry_row: Optional[float]  # row at column 0; None for a vertical line


@dataclass
class MatchScore:
    """Detection counts of a method against ground truth"""
    true_positive: int
    false_positive: int
    false_negative: int
    velocity_rmse_kmh: Optional[float]

    @property
    def errors(self) -> int:
        return self.false_positive + self.false_negative

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "true_positive": self.true_positive,
            "false_positive": self.false_positive,
            "false_negative": self.false_negative,
            "velocity_rmse_kmh": self.velocity_rmse_kmh,
        }


def line_candidate(rho: float, theta: float, score: float, dt: float, dx: float) -> LineCandidate:
    """Derive speed and entry row from (rho, theta)"""
    sin_t, cos_t = math.sin(theta), math.cos(theta)
    velocity = math.inf if abs(cos_t) < 1e-12 else -sin_t / cos_t * dx / dt * KMH_PER_MPS
    entry_row = rho / sin_t if abs(sin_t) > 1e-12 else None
    return LineCandidate(rho=float(rho), theta=float(theta), score=float(score), velocity_kmh=velocity, entry_row=entry_row)


def _local_maxima(array: np.ndarray, threshold: float) -> List[Tuple[int, int]]:
    """Cells equal to their 3x3 neighborhood maximum and at least threshold"""
    neighborhood = ndimage.maximum_filter(array, size=3, mode="constant", cval=0.0)
    hits = np.argwhere((array == neighborhood) & (array >= threshold))
    return [tuple(int(i) for i in hit) for hit in hits]


def hough_accumulator(m: WaterfallMatrix, binarize_thresh: float, theta_bins: int,
                      rho_bins: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray, float]:
    """(rho x theta) vote array, theta values and rho half-range"""
    if theta_bins < 2 or (rho_bins is not None and rho_bins < 2):
        raise ValueError("Hough bin counts must be >= 2")
    diag = math.hypot(m.m, m.n)
    if rho_bins is None:
        rho_bins = 2 * math.ceil(diag) + 1

    thetas = np.linspace(0.0, math.pi, theta_bins, endpoint=False)
    rows, cols = np.nonzero(m.values >= binarize_thresh)
    accumulator = np.zeros((rho_bins, theta_bins), dtype=np.int64)
    if len(rows):
        rho = cols[:, None] * np.cos(thetas)[None, :] + rows[:, None] * np.sin(thetas)[None, :]
        bins = np.clip(np.floor((rho + diag) / (2 * diag) * rho_bins).astype(int), 0, rho_bins - 1)
        theta_index = np.broadcast_to(np.arange(theta_bins), bins.shape)
        np.add.at(accumulator, (bins.ravel(), theta_index.ravel()), 1)
    return accumulator, thetas, diag


def hough_lines(m: WaterfallMatrix, binarize_thresh: float = 0.06, vote_thresh: int = 40,
                theta_bins: int = 180, rho_bins: Optional[int] = None) -> List[LineCandidate]:
    """Standard Hough line detection with 3x3 non-maximum suppression, strongest first"""
    if binarize_thresh <= 0 or vote_thresh <= 0:
        raise ValueError("Hough thresholds must be positive")
    accumulator, thetas, diag = hough_accumulator(m, binarize_thresh, theta_bins, rho_bins)
    bins = accumulator.shape[0]
    bin_width = 2 * diag / bins

    candidates = []
    for rho_index, theta_index in _local_maxima(accumulator, vote_thresh):
        rho = -diag + (rho_index + 0.5) * bin_width
        candidates.append(line_candidate(rho, thetas[theta_index], accumulator[rho_index, theta_index], m.dt, m.dx))
    candidates.sort(key=lambda c: (-c.score, c.theta, c.rho))
    logger.debug(f"Hough: {len(candidates)} candidates above {vote_thresh} votes")
    return candidates


def radon_offsets(m: WaterfallMatrix) -> np.ndarray:
    half = math.ceil(math.hypot(m.m - 1, m.n - 1) / 2)
    return np.arange(-half, half + 1, dtype=np.float64)


def radon_transform(m: WaterfallMatrix, angles: Sequence[float]) -> np.ndarray:
    """Line integrals (angle x offset) about the image center, bilinear sampling at unit steps"""
    angles = np.asarray(angles, dtype=np.float64)
    if angles.size == 0:
        raise ValueError("at least one projection angle is required")

    offsets = radon_offsets(m)
    steps = offsets  # along-line positions share the offset grid
    center_row, center_col = (m.m - 1) / 2.0, (m.n - 1) / 2.0
    s, t = np.meshgrid(offsets, steps, indexing="ij")

    projections = np.empty((len(angles), len(offsets)))
    for k, phi in enumerate(angles):
        cos_p, sin_p = math.cos(phi), math.sin(phi)
        cols = center_col + s * cos_p - t * sin_p
        rows = center_row + s * sin_p + t * cos_p
        samples = ndimage.map_coordinates(m.values, [rows, cols], order=1, mode="grid-constant", cval=0.0)
        projections[k] = samples.sum(axis=1)
    return projections


def stripe_angles(dt: float, dx: float, v_min_kmh: float = 30.0, v_max_kmh: float = 200.0, count: int = 90) -> np.ndarray:
    """Projection angles whose lines have stripe speeds in [v_min, v_max]"""
    per_row = dt / dx / KMH_PER_MPS
    lo = math.pi - math.atan(v_min_kmh * per_row)
    hi = math.pi - math.atan(v_max_kmh * per_row)
    return np.linspace(hi, lo, count)


def radon_lines(m: WaterfallMatrix, cfg: BaselineConfig = BaselineConfig()) -> List[LineCandidate]:
    """Non-maximum-suppressed Radon peaks on the thresholded matrix, strongest first"""
    if cfg.radon_full_range:
        angles = np.linspace(0.0, math.pi, cfg.radon_angle_count, endpoint=False)
    else:
        angles = stripe_angles(m.dt, m.dx, cfg.radon_v_min_kmh, cfg.radon_v_max_kmh, cfg.radon_angle_count)

    masked = m.with_values(np.where(m.values >= cfg.binarize_thresh, m.values, 0.0))
    projections = radon_transform(masked, angles)
    top = float(projections.max())
    if top <= 0:
        return []

    offsets = radon_offsets(m)
    center_row, center_col = (m.m - 1) / 2.0, (m.n - 1) / 2.0
    candidates = []
    for angle_index, offset_index in _local_maxima(projections, cfg.radon_min_score_frac * top):
        phi = float(angles[angle_index])
        rho = offsets[offset_index] + center_col * math.cos(phi) + center_row * math.sin(phi)
        candidates.append(line_candidate(rho, phi, projections[angle_index, offset_index], m.dt, m.dx))
    candidates.sort(key=lambda c: (-c.score, c.theta, c.rho))
    logger.debug(f"Radon: {len(candidates)} candidates over {len(angles)} angles")
    return candidates


def _detections(items: Sequence[Union[LineCandidate, Trajectory]]) -> List[Tuple[Optional[float], float]]:
    out = []
    for item in items:
        if isinstance(item, Trajectory):
            out.append((float(item.rows[0]), item.fitted_velocity_kmh))
        else:
            out.append((item.entry_row, item.velocity_kmh))
    return out


def score_method(items: Sequence[Union[LineCandidate, Trajectory]], truth: GroundTruth,
                 tolerance_rows: float = 3.0, tolerance_kmh: float = 5.0) -> MatchScore:
    """Greedy one-to-one matching on entry-row proximity within both tolerances"""
    detections = _detections(items)
    vehicles = truth.visible()

    pairs = []
    for i, (row, velocity) in enumerate(detections):
        if row is None or not math.isfinite(velocity):
            continue
        for j, v in enumerate(vehicles):
            d_row = abs(row - v.entry_row)
            d_v = abs(velocity - v.velocity_kmh)
            if d_row <= tolerance_rows and d_v <= tolerance_kmh:
                pairs.append((d_row, d_v, row, velocity, v.vehicle_id, i, j))
    pairs.sort(key=lambda p: p[:5])

    used_items, used_truth, errors = set(), set(), []
    for d_row, d_v, _, _, _, i, j in pairs:
        if i in used_items or j in used_truth:
            continue
        used_items.add(i)
        used_truth.add(j)
        errors.append(d_v)

    tp = len(errors)
    rmse = float(np.sqrt(np.mean(np.square(errors)))) if errors else None
    return MatchScore(true_positive=tp, false_positive=len(detections) - tp,
                      false_negative=len(vehicles) - tp, velocity_rmse_kmh=rmse)
