"""
Vehicle entry detection
Butterworth smoothing of the entry-channel signal followed by sign-difference peak search
"""

import logging
from dataclasses import dataclass
from typing import List, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import signal

from core.waterfall import WaterfallMatrix

logger = logging.getLogger("Detect")

MIN_FILTER_LENGTH = 8


class ButterworthConfig(BaseModel):
    """Digital Butterworth low-pass design"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    order_N: int = Field(1, ge=1)
    cutoff_Wn: float = Field(0.5, gt=0, lt=1)  # fraction of Nyquist
    zero_phase: bool = True


class DetectConfig(BaseModel):
    """Entry detection parameters"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    min_height: float = Field(0.06, ge=0)
    entry_col: int = Field(0, ge=0)
    min_separation_s: float = Field(0.0, ge=0)  # 0 keeps every peak
    baseline: Literal["median", "none"] = "none"


# one event per vehicle when gauge sidelobes also cross min_height
DEDUPLICATED_DETECT = DetectConfig(min_separation_s=1.5, baseline="median")


@dataclass
class Peak:
    """Crest of a 1-D sequence"""
    index: int
    height: float
    width: int  # contiguous samples above half height


@dataclass
class EntryEvent:
    """Vehicle appearance at the entry channel"""
    vehicle_id: int
    entry_row: int
    entry_col: int
    entry_time_s: float
    peak: Peak


def butterworth_lowpass(values, cfg: ButterworthConfig = ButterworthConfig()) -> np.ndarray:
    """Low-pass filter a 1-D sequence (forward-backward when zero_phase)"""
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"expected a 1-D sequence, got {x.ndim}-D")
    if len(x) < MIN_FILTER_LENGTH:
        raise ValueError(f"sequence too short for filtering: {len(x)} < {MIN_FILTER_LENGTH}")
    if not 0 < cfg.cutoff_Wn < 1:
        raise ValueError(f"cutoff Wn must lie in (0, 1), got {cfg.cutoff_Wn}")

    b, a = signal.butter(cfg.order_N, cfg.cutoff_Wn, btype="low")
    if cfg.zero_phase:
        padlen = min(3 * max(len(a), len(b)), len(x) - 1)
        return signal.filtfilt(b, a, x, padlen=padlen)

    # start in steady state at the first sample so a constant input passes unchanged
    zi = signal.lfilter_zi(b, a) * x[0]
    filtered, _ = signal.lfilter(b, a, x, zi=zi)
    return filtered


def _resolve_flat_signs(s: np.ndarray) -> np.ndarray:
    """Tail-to-head pass: a zero slope takes +1 if the next slope is >= 0, else -1"""
    s = s.copy()
    for i in range(len(s) - 1, -1, -1):
        if s[i] == 0:
            following = s[i + 1] if i + 1 < len(s) else 1
            s[i] = 1 if following >= 0 else -1
    return s


def _width_at_half_height(v: np.ndarray, index: int) -> int:
    half = v[index] / 2.0
    left = index
    while left - 1 >= 0 and v[left - 1] > half:
        left -= 1
    right = index
    while right + 1 < len(v) and v[right + 1] > half:
        right += 1
    return right - left + 1


def sign_changes(values) -> np.ndarray:
    """Second difference R of the resolved slope signs (-2 marks a crest at i+1, +2 a trough)"""
    v = np.asarray(values, dtype=np.float64)
    slopes = np.sign(np.diff(v)).astype(int)
    return np.diff(_resolve_flat_signs(slopes))


def find_troughs(values) -> List[int]:
    return [int(i) + 1 for i in np.nonzero(sign_changes(values) == 2)[0]]


def find_peaks(values, min_height: float = 0.0) -> List[Peak]:
    """Crests of V (first sample of a plateau), at least min_height high"""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or len(v) < 3:
        raise ValueError("peak search needs a 1-D sequence of length >= 3")

    peaks = []
    for i in np.nonzero(sign_changes(v) == -2)[0]:
        index = int(i) + 1
        if v[index] >= min_height:
            peaks.append(Peak(index=index, height=float(v[index]), width=_width_at_half_height(v, index)))
    return peaks


def suppress_close_peaks(peaks: List[Peak], min_distance: float) -> List[Peak]:
    """Greedy suppression: keep the highest peak, drop others closer than min_distance samples"""
    if min_distance <= 0:
        return list(peaks)
    kept: List[Peak] = []
    for peak in sorted(peaks, key=lambda p: (-p.height, p.index)):
        if all(abs(peak.index - k.index) >= min_distance for k in kept):
            kept.append(peak)
    return sorted(kept, key=lambda p: p.index)


def detect_entries(m: WaterfallMatrix, bw: ButterworthConfig = ButterworthConfig(), min_height: float = 0.06,
                   entry_col: int = 0, min_separation_s: float = 0.0, baseline: str = "none") -> List[EntryEvent]:
    """Entry events from the smoothed entry-channel signal, ordered by row

    With the defaults every peak at or above min_height becomes an event. A positive
    min_separation_s keeps only the highest of peaks closer than that, and the median
    baseline is subtracted before the height test.
    """
    if not 0 <= entry_col < m.n:
        raise ValueError(f"entry column {entry_col} out of range [0, {m.n})")
    if baseline not in ("median", "none"):
        raise ValueError(f"unknown baseline {baseline!r}")

    column = butterworth_lowpass(m.values[:, entry_col], bw)
    if baseline == "median":
        column = column - float(np.median(column))

    raw = find_peaks(column, min_height)
    peaks = suppress_close_peaks(raw, min_separation_s / m.dt)
    if len(peaks) < len(raw):
        logger.debug(f"Suppressed {len(raw) - len(peaks)} peaks closer than {min_separation_s}s")

    events = [
        EntryEvent(vehicle_id=k, entry_row=p.index, entry_col=entry_col, entry_time_s=m.time_of_row(p.index), peak=p)
        for k, p in enumerate(peaks, start=1)
    ]
    logger.info(f"Detected {len(events)} entry events on column {entry_col}")
    return events


def detect_with_config(m: WaterfallMatrix, bw: ButterworthConfig, cfg: DetectConfig) -> List[EntryEvent]:
    return detect_entries(m, bw, cfg.min_height, cfg.entry_col, cfg.min_separation_s, cfg.baseline)
