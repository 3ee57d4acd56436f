"""
Quasi-static forward model of vehicle-induced fiber strain
Half-space point-load deformation, gauge-length differencing, four-wheel superposition,
and synthesis of multi-vehicle waterfall matrices with ground truth
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from core.waterfall import WaterfallMatrix

logger = logging.getLogger("ForwardSim")

ArrayLike = Union[float, np.ndarray]


class Medium(BaseModel):
    """Elastic half-space"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    shear_modulus_G: float = Field(1e7, gt=0)
    poisson_nu: float = Field(0.25, ge=0, lt=0.5)


class FiberLayout(BaseModel):
    """Buried fiber geometry and interrogator sampling"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    depth_dz: float = Field(0.05, gt=0)
    channel_spacing_dx: float = Field(0.8, gt=0)
    channel_count: int = Field(100, ge=1)
    gauge_length_l: float = Field(10.0, gt=0)
    row_dt: float = Field(0.1, gt=0)
    start_position: float = 0.0  # meters of channel 0

    @property
    def span(self) -> float:
        return self.channel_count * self.channel_spacing_dx


class VehicleSpec(BaseModel):
    """Four-wheel vehicle moving along the fiber at constant velocity"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    load_F: float = Field(gt=0)
    wheel_weights_w: Tuple[float, float, float, float] = (0.25, 0.25, 0.25, 0.25)
    front_track_a: float = Field(1.8, gt=0)
    length_b: float = Field(5.3, gt=0)
    lateral_offset_dy: float = 3.0
    entry_time: float = 0.0
    entry_position: float = 0.0
    velocity: float  # m/s, positive = increasing distance

    @field_validator("wheel_weights_w")
    @classmethod
    def _weights_are_fractions(cls, w):
        if any(x < 0 for x in w):
            raise ValueError("wheel weights must be non-negative")
        if abs(sum(w) - 1.0) > 1e-12:
            raise ValueError(f"wheel weights must sum to 1, got {sum(w)}")
        return w

    @property
    def wheel_offsets(self) -> np.ndarray:
        """(alpha, beta) per wheel, left front to right rear"""
        a, b = self.front_track_a, self.length_b
        return np.array([[b / 2, a / 2], [b / 2, -a / 2], [-b / 2, -a / 2], [-b / 2, a / 2]])

    def position_at(self, time: ArrayLike) -> ArrayLike:
        return self.entry_position + self.velocity * (np.asarray(time) - self.entry_time)


class Scene(BaseModel):
    """Complete synthetic experiment"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    medium: Medium = Medium()
    fiber: FiberLayout = FiberLayout()
    vehicles: List[VehicleSpec] = []
    duration: float = Field(gt=0)
    noise_sigma: float = Field(0.0, ge=0)
    rng_seed: int = 0

    @property
    def row_count(self) -> int:
        # guards against duration/row_dt landing a hair above an integer
        return max(1, math.ceil(self.duration / self.fiber.row_dt - 1e-9))


@dataclass
class VehicleTruth:
    """True per-row trajectory of one simulated vehicle"""
    vehicle_id: int
    velocity_mps: float
    rows: np.ndarray
    cols: np.ndarray  # fractional column of the vehicle center

    @property
    def entry_row(self) -> Optional[int]:
        return int(self.rows[0]) if len(self.rows) else None

    @property
    def exit_row(self) -> Optional[int]:
        return int(self.rows[-1]) if len(self.rows) else None

    @property
    def velocity_kmh(self) -> float:
        return self.velocity_mps * 3.6

    def col_at(self, row: int) -> Optional[float]:
        hit = np.nonzero(self.rows == row)[0]
        return float(self.cols[hit[0]]) if len(hit) else None


@dataclass
class GroundTruth:
    """Simulator oracle for a synthesized scene"""
    vehicles: List[VehicleTruth] = field(default_factory=list)

    def visible(self) -> List[VehicleTruth]:
        """Vehicles that enter the fiber span at least once, ordered by entry row"""
        seen = [v for v in self.vehicles if v.entry_row is not None]
        return sorted(seen, key=lambda v: (v.entry_row, v.vehicle_id))


def quasi_static_deformation(F: float, medium: Medium, dx_m: ArrayLike, dy_m: ArrayLike, dz_m: ArrayLike) -> ArrayLike:
    """Point-load surface deformation (F / 4 pi G) * p(dx, dy, dz)"""
    dx = np.asarray(dx_m, dtype=np.float64)
    dy = np.asarray(dy_m, dtype=np.float64)
    dz = np.asarray(dz_m, dtype=np.float64)
    if np.any(dz <= 0):
        raise ValueError("depth dz must be positive")

    r = np.sqrt(dx * dx + dy * dy + dz * dz)
    if np.any(r == 0):
        raise ValueError("singular point r = 0")

    ratio = dz / r
    p = (dx / (r * r)) * (ratio + (2.0 * medium.poisson_nu - 1.0) / (1.0 + ratio))
    result = F / (4.0 * math.pi * medium.shear_modulus_G) * p
    return float(result) if np.ndim(result) == 0 else result


def gauge_response(F: float, medium: Medium, dx_m: ArrayLike, dy_m: ArrayLike, dz_m: ArrayLike, gauge_l: float) -> ArrayLike:
    """Gauge-length differenced deformation (1/l)[P(dx + l/2) - P(dx - l/2)]"""
    if not gauge_l > 0:
        raise ValueError(f"gauge length must be positive, got {gauge_l}")
    half = gauge_l / 2.0
    dx = np.asarray(dx_m, dtype=np.float64)
    front = quasi_static_deformation(F, medium, dx + half, dy_m, dz_m)
    rear = quasi_static_deformation(F, medium, dx - half, dy_m, dz_m)
    result = (np.asarray(front) - np.asarray(rear)) / gauge_l
    return float(result) if np.ndim(result) == 0 else result


def vehicle_response(v: VehicleSpec, medium: Medium, fiber: FiberLayout, sensor_dx: ArrayLike) -> ArrayLike:
    """Four-wheel response |k_x2 - k_x1| at sensor offsets relative to the vehicle center"""
    dx = np.asarray(sensor_dx, dtype=np.float64)
    half = fiber.gauge_length_l / 2.0
    k_front = np.zeros_like(dx)
    k_rear = np.zeros_like(dx)
    for w, (alpha, beta) in zip(v.wheel_weights_w, v.wheel_offsets):
        if w == 0:
            continue
        dy = v.lateral_offset_dy + beta
        k_front = k_front + w * quasi_static_deformation(v.load_F, medium, dx + half + alpha, dy, fiber.depth_dz)
        k_rear = k_rear + w * quasi_static_deformation(v.load_F, medium, dx - half + alpha, dy, fiber.depth_dz)
    response = np.abs(k_rear - k_front)
    return float(response) if response.ndim == 0 else response


def response_profile(v: VehicleSpec, medium: Medium, fiber: FiberLayout,
                     half_width_m: float = 30.0, step_m: float = 0.1) -> Tuple[np.ndarray, np.ndarray]:
    """Spatial response of a stationary vehicle on a regular sensor_dx grid"""
    count = int(round(2 * half_width_m / step_m)) + 1
    grid = np.linspace(-half_width_m, half_width_m, count)
    return grid, vehicle_response(v, medium, fiber, grid)


def count_response_peaks(profile: np.ndarray, rel_height: float = 0.5) -> int:
    """Local maxima of a spatial profile reaching rel_height of its global maximum"""
    from core.detect import find_peaks

    profile = np.asarray(profile, dtype=np.float64)
    top = float(profile.max())
    if top <= 0:
        return 0
    return len(find_peaks(profile, rel_height * top))


def synthesize_waterfall(scene: Scene) -> Tuple[WaterfallMatrix, GroundTruth]:
    """Superpose vehicle responses over the fiber span and add seeded Gaussian noise

    Recorded amplitude is the magnitude |signal + noise|, so the values stay non-negative and
    the noise floor is biased upward: where the signal is zero its mean is sigma * sqrt(2 / pi)
    rather than 0. Noise for row i is drawn from a generator keyed on (rng_seed, i), so rows
    can be produced in any order.
    """
    fiber = scene.fiber
    rows, cols = scene.row_count, fiber.channel_count
    times = np.arange(rows) * fiber.row_dt
    positions = fiber.start_position + np.arange(cols) * fiber.channel_spacing_dx
    lo, hi = fiber.start_position, fiber.start_position + fiber.span

    values = np.zeros((rows, cols))
    truth = GroundTruth()
    for vehicle_id, v in enumerate(scene.vehicles, start=1):
        centers = v.position_at(times)
        active = (centers >= lo - v.length_b) & (centers <= hi + v.length_b)
        if np.any(active):
            offsets = positions[None, :] - centers[active][:, None]
            values[active] += vehicle_response(v, scene.medium, fiber, offsets)

        true_cols = (centers - fiber.start_position) / fiber.channel_spacing_dx
        inside = (true_cols >= 0) & (true_cols <= cols - 1)
        truth.vehicles.append(VehicleTruth(
            vehicle_id=vehicle_id,
            velocity_mps=v.velocity,
            rows=np.nonzero(inside)[0],
            cols=true_cols[inside],
        ))

    if scene.noise_sigma > 0:
        for i in range(rows):
            rng = np.random.default_rng([scene.rng_seed, i])
            values[i] += rng.normal(0.0, scene.noise_sigma, cols)
    values = np.abs(values)

    logger.info(f"Synthesized {rows}x{cols} waterfall with {len(scene.vehicles)} vehicles (sigma={scene.noise_sigma:g})")
    matrix = WaterfallMatrix(values, fiber.row_dt, fiber.channel_spacing_dx, 0.0, fiber.start_position,
                             fiber.gauge_length_l)
    return matrix, truth


def scene_with_snr(scene: Scene, snr: float) -> Scene:
    """Copy of the scene with noise_sigma set to (noiseless peak amplitude) / snr"""
    if not snr > 0:
        raise ValueError(f"snr must be positive, got {snr}")
    clean, _ = synthesize_waterfall(scene.model_copy(update={"noise_sigma": 0.0}))
    peak = float(clean.values.max())
    if peak == 0:
        raise ValueError("scene has no signal to scale noise against")
    return scene.model_copy(update={"noise_sigma": peak / snr})
