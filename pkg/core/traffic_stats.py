"""
Traffic indices from extracted trajectories
Profile statistics (flow, time mean speed, density) at a fixed position and segment
statistics (density, space mean speed, flow) over a stretch of road
"""

import logging
from dataclasses import asdict, dataclass, field
from decimal import ROUND_DOWN, Decimal
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from core.track import Trajectory

logger = logging.getLogger("TrafficStats")

UNITS = {
    "profile": {"average_velocity": "km/h", "flow": "veh/s", "density": "(veh/s)/(km/h)"},
    "segment": {"average_velocity": "km/h", "flow": "(veh/m)*(km/h)", "density": "veh/m"},
}


class ProfileQuery(BaseModel):
    """Fixed road profile observed over [window_start, window_end)"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    position: float  # meters
    window_start: float
    window_end: float

    @model_validator(mode="after")
    def _positive_period(self):
        if not self.window_end > self.window_start:
            raise ValueError(f"window_end ({self.window_end}) must exceed window_start ({self.window_start})")
        return self

    @property
    def period(self) -> float:
        return self.window_end - self.window_start


class SegmentQuery(BaseModel):
    """Road segment [seg_start, seg_end] at an instant or averaged over a time window"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    seg_start: float
    seg_end: float
    instant: Optional[float] = None
    window: Optional[Tuple[float, float]] = None
    step_s: Optional[float] = None  # sampling step inside a window; defaults to the trajectory row period

    @model_validator(mode="after")
    def _valid_segment(self):
        if not self.seg_end > self.seg_start:
            raise ValueError(f"seg_end ({self.seg_end}) must exceed seg_start ({self.seg_start})")
        if (self.instant is None) == (self.window is None):
            raise ValueError("exactly one of instant or window is required")
        if self.window is not None and not self.window[1] > self.window[0]:
            raise ValueError(f"invalid averaging window {self.window}")
        if self.step_s is not None and not self.step_s > 0:
            raise ValueError("step_s must be positive")
        return self

    @property
    def length(self) -> float:
        return self.seg_end - self.seg_start


@dataclass
class TrafficRecord:
    """One row of a traffic report"""
    kind: str  # "profile" or "segment"
    vehicle_count: float
    mean_speed_kmh: Optional[float]  # None when no vehicles
    flow: float
    density: float
    time: str = ""
    position: str = ""
    vehicle_ids: List[int] = field(default_factory=list)


def _first_crossing(traj: Trajectory, position: float, start: float, end: float) -> Optional[float]:
    """Row at which the fitted path passes the position inside [start, end), if any"""
    col = (position - traj.x0) / traj.dx
    for row in traj.crossing_rows(col):
        time = float(traj.time_of_row(row))
        if start <= time < end:
            return row
    return None


def profile_crossings(trajs: List[Trajectory], position: float, start: float, end: float) -> List[Tuple[Trajectory, float]]:
    crossings = []
    for traj in trajs:
        row = _first_crossing(traj, position, start, end)
        if row is not None:
            crossings.append((traj, row))
    return crossings


def profile_stats(trajs: List[Trajectory], q: ProfileQuery) -> TrafficRecord:
    """N crossings, Q = N/T, TMS = harmonic mean speed, K = Q/TMS"""
    crossings = profile_crossings(trajs, q.position, q.window_start, q.window_end)
    n = len(crossings)
    flow = n / q.period

    speeds = []
    for traj, row in crossings:
        speed = abs(traj.speed_kmh_at(row))
        if speed == 0:
            raise ValueError(f"vehicle {traj.vehicle_id} has zero speed at the profile; time mean speed undefined")
        speeds.append(speed)

    if n:
        tms = n / sum(1.0 / v for v in speeds)
        density = flow / tms
    else:
        tms, density = None, 0.0

    logger.debug(f"Profile {q.position} m: {n} crossings in [{q.window_start}, {q.window_end})")
    return TrafficRecord(
        kind="profile",
        vehicle_count=n,
        mean_speed_kmh=tms,
        flow=flow,
        density=density,
        time=f"{q.window_start:g}-{q.window_end:g}s",
        position=f"{q.position:g}m",
        vehicle_ids=[traj.vehicle_id for traj, _ in crossings],
    )


def _present(trajs: List[Trajectory], q: SegmentQuery, time: float) -> List[Tuple[Trajectory, float]]:
    """Vehicles whose fitted position lies in the segment at the given time"""
    present = []
    for traj in trajs:
        row = (time - traj.t0) / traj.dt
        if not traj.rows[0] - 0.5 <= row <= traj.rows[-1] + 0.5:
            continue
        if q.seg_start <= traj.position_m_at(time) <= q.seg_end:
            present.append((traj, abs(traj.speed_kmh_at(row))))
    return present


def segment_stats(trajs: List[Trajectory], q: SegmentQuery) -> TrafficRecord:
    """N vehicles in the segment, SMS = arithmetic mean speed, K = N/L, Q = K * SMS"""
    if q.instant is not None:
        instants = [q.instant]
        label = f"{q.instant:g}s"
    else:
        step = q.step_s or (trajs[0].dt if trajs else 1.0)
        start, end = q.window
        instants = list(np.arange(start, end, step)) or [start]
        label = f"{start:g}-{end:g}s"

    samples = [_present(trajs, q, float(t)) for t in instants]
    counts = [len(s) for s in samples]
    speeds = [v for s in samples for _, v in s]

    n = counts[0] if len(counts) == 1 else float(np.mean(counts))
    density = n / q.length
    sms = float(np.mean(speeds)) if speeds else None
    flow = density * sms if sms is not None else 0.0
    ids = sorted({traj.vehicle_id for s in samples for traj, _ in s})

    return TrafficRecord(
        kind="segment",
        vehicle_count=n,
        mean_speed_kmh=sms,
        flow=flow,
        density=density,
        time=label,
        position=f"{q.seg_start:g}-{q.seg_end:g}m",
        vehicle_ids=ids,
    )


def interval_counts(trajs: List[Trajectory], position: float, start: float, end: float,
                    interval_s: float = 60.0) -> List[Dict]:
    """Vehicles passing a profile per fixed interval, split by class"""
    if not interval_s > 0:
        raise ValueError(f"interval must be positive, got {interval_s}")
    rows = []
    lo = start
    while lo < end:
        hi = min(lo + interval_s, end)
        crossings = profile_crossings(trajs, position, lo, hi)
        trucks = sum(1 for traj, _ in crossings if traj.vehicle_class == "truck")
        rows.append({"start": lo, "end": hi, "total": len(crossings), "car": len(crossings) - trucks, "truck": trucks})
        lo = hi
    return rows


def truncate(value: float, places: int) -> float:
    """Drop digits beyond `places` decimals (toward zero)"""
    quantum = Decimal(1).scaleb(-places)
    return float(Decimal(repr(float(value))).quantize(quantum, rounding=ROUND_DOWN))


def count_accuracy(detected: int, reference: int) -> float:
    """Detection accuracy 1 - |d - r| / r as a percentage, truncated to two decimals"""
    if reference <= 0:
        raise ValueError(f"reference count must be positive, got {reference}")
    rate = max(Fraction(0), 1 - Fraction(abs(detected - reference), reference)) * 100
    exact = Decimal(rate.numerator) / Decimal(rate.denominator)
    return float(exact.quantize(Decimal("0.01"), rounding=ROUND_DOWN))


def format_record(record: TrafficRecord) -> Dict:
    """Report row: speed and flow truncated to 2 decimals, density to 4, raw values alongside"""
    speed = record.mean_speed_kmh
    return {
        "type": record.kind,
        "time": record.time,
        "position": record.position,
        "vehicle_count": record.vehicle_count,
        "average_velocity": truncate(speed, 2) if speed is not None else None,
        "flow": truncate(record.flow, 2),
        "density": truncate(record.density, 4),
        "units": UNITS[record.kind],
        "raw": asdict(record),
    }


def traffic_report(profiles: List[TrafficRecord], segments: List[TrafficRecord]) -> Dict:
    return {
        "schema_version": 1,
        "profiles": [format_record(r) for r in profiles],
        "segments": [format_record(r) for r in segments],
    }
