"""
Synthetic traffic scenarios
Vehicle presets and scene builders (separated traffic, overtaking, congestion, heavy trucks)
used by the CLI, the method comparison and the test-suite
"""

import logging
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from core.forward_sim import FiberLayout, Scene, VehicleSpec, scene_with_snr
from tools.artifacts import scene_json

logger = logging.getLogger("Scenarios")

GRAVITY = 9.81
MIN_DURATION_S = 16.0  # keeps 4-level db4 decomposition valid at 0.1 s rows


def kmh_to_mps(velocity_kmh: float) -> float:
    return velocity_kmh / 3.6


def car_spec(velocity_kmh: float, entry_time: float, entry_position: float = 0.0,
             lateral_offset_dy: float = 3.0, length_b: float = 5.3, tonnes: float = 2.5) -> VehicleSpec:
    """Passenger car / MPV"""
    return VehicleSpec(
        load_F=tonnes * 1000 * GRAVITY,
        length_b=length_b,
        lateral_offset_dy=lateral_offset_dy,
        entry_time=entry_time,
        entry_position=entry_position,
        velocity=kmh_to_mps(velocity_kmh),
    )


def truck_spec(velocity_kmh: float, entry_time: float, entry_position: float = 0.0,
               lateral_offset_dy: float = 3.0, length_b: float = 17.5, tonnes: float = 20.0) -> VehicleSpec:
    """Heavy truck (long wheelbase shows two response lobes)"""
    return car_spec(velocity_kmh, entry_time, entry_position, lateral_offset_dy, length_b, tonnes)


def medium_truck_spec(velocity_kmh: float, entry_time: float, **kwargs) -> VehicleSpec:
    return truck_spec(velocity_kmh, entry_time, length_b=9.6, **kwargs)


def scene_duration(fiber: FiberLayout, vehicles: List[VehicleSpec], margin_s: float = 3.0) -> float:
    """Long enough for every vehicle to clear the far end of the fiber"""
    end = MIN_DURATION_S
    for v in vehicles:
        far = fiber.start_position + fiber.span + v.length_b if v.velocity > 0 else fiber.start_position - v.length_b
        end = max(end, v.entry_time + (far - v.entry_position) / v.velocity + margin_s)
    return float(end)


def _finish(fiber: FiberLayout, vehicles: List[VehicleSpec], seed: int, snr: Optional[float]) -> Scene:
    scene = Scene(fiber=fiber, vehicles=vehicles, duration=scene_duration(fiber, vehicles), rng_seed=seed)
    return scene_with_snr(scene, snr) if snr else scene


def separated_scene(count: int = 3, seed: int = 0, snr: Optional[float] = None, fiber: FiberLayout = FiberLayout(),
                    speed_kmh: Tuple[float, float] = (75.0, 95.0),
                    headway_s: Tuple[float, float] = (6.0, 9.0)) -> Scene:
    """Cars entering one after another with headways too long to overtake on the fiber"""
    rng = np.random.default_rng(seed)
    entry = 2.0
    vehicles = []
    for _ in range(count):
        vehicles.append(car_spec(float(rng.uniform(*speed_kmh)), entry))
        entry += float(rng.uniform(*headway_s))
    return _finish(fiber, vehicles, seed, snr)


def crossing_scene(seed: int = 0, snr: Optional[float] = None,
                   fiber: FiberLayout = FiberLayout(channel_count=400)) -> Scene:
    """Fast car overtaking a slow car near the middle of the fiber"""
    rng = np.random.default_rng(seed)
    slow = kmh_to_mps(float(rng.uniform(62.0, 70.0)))
    fast = kmh_to_mps(float(rng.uniform(100.0, 115.0)))
    meet = float(rng.uniform(0.4, 0.6)) * fiber.span
    gap = meet * (1.0 / slow - 1.0 / fast)
    vehicles = [car_spec(slow * 3.6, 2.0), car_spec(fast * 3.6, 2.0 + gap)]
    return _finish(fiber, vehicles, seed, snr)


def congestion_scene(seed: int = 0, snr: Optional[float] = None, count: int = 3,
                     fiber: FiberLayout = FiberLayout(channel_count=200)) -> Scene:
    """Closely spaced cars (2-3 s headway) whose stripes sit side by side"""
    rng = np.random.default_rng(seed)
    entry = 2.0
    vehicles = []
    for _ in range(count):
        vehicles.append(car_spec(float(rng.uniform(65.0, 90.0)), entry))
        entry += float(rng.uniform(2.0, 3.0))
    return _finish(fiber, vehicles, seed, snr)


def truck_scene(seed: int = 0, snr: Optional[float] = None, fiber: FiberLayout = FiberLayout()) -> Scene:
    """A heavy truck followed by a car"""
    vehicles = [truck_spec(80.0, 2.0), car_spec(85.0, 9.0)]
    return _finish(fiber, vehicles, seed, snr)


PRESETS = {
    "separated": separated_scene,
    "crossing": crossing_scene,
    "congestion": congestion_scene,
    "truck": truck_scene,
}


def build_preset(name: str, seed: int = 0, snr: Optional[float] = None) -> Scene:
    if name not in PRESETS:
        raise ValueError(f"Unknown scenario preset: {name} (choose from {sorted(PRESETS)})")
    return PRESETS[name](seed=seed, snr=snr)


class ScenarioLibrary:
    """Writes example scene files for every preset"""

    def __init__(self, output_dir: str = "scenes"):
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def write_all(self, seeds: int = 3, snr: float = 20.0) -> List[Path]:
        written = []
        jobs = [(name, seed) for name in PRESETS for seed in range(seeds)]
        for name, seed in tqdm(jobs, desc="Scenes"):
            path = self.output_dir / f"{name}_{seed:02d}.json"
            path.write_text(scene_json(build_preset(name, seed, snr)))
            written.append(path)
        logger.info(f"Wrote {len(written)} scene files to {self.output_dir}")
        return written


if __name__ == "__main__":
    from utils.config import setup_logging

    setup_logging()
    ScenarioLibrary().write_all()
