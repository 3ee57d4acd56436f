import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import signal

from core.detect import (DEDUPLICATED_DETECT, ButterworthConfig, Peak, butterworth_lowpass, detect_entries,
                         detect_with_config, find_peaks, find_troughs, suppress_close_peaks)
from core.forward_sim import synthesize_waterfall
from core.preprocess import preprocess_matrix
from core.waterfall import WaterfallMatrix
from data.scenarios import separated_scene


def brute_force_peaks(v):
    """Rising edge into a (possibly flat) crest that is followed by a strict fall"""
    peaks, i = [], 1
    while i < len(v) - 1:
        if v[i] > v[i - 1]:
            j = i
            while j + 1 < len(v) and v[j + 1] == v[i]:
                j += 1
            if j + 1 < len(v) and v[j + 1] < v[i]:
                peaks.append(i)
            i = j + 1
        else:
            i += 1
    return peaks


@pytest.fixture(scope="module")
def separated():
    matrix, truth = synthesize_waterfall(separated_scene(count=3, seed=0))
    return preprocess_matrix(matrix), truth


@pytest.mark.parametrize("zero_phase", [True, False])
def test_constant_passes_unchanged(zero_phase):
    out = butterworth_lowpass(np.full(100, 3.7), ButterworthConfig(zero_phase=zero_phase))
    assert np.allclose(out, 3.7, atol=1e-9)


def test_half_power_at_cutoff():
    n = np.arange(4096)
    x = np.sin(2 * np.pi * 0.25 * n + 0.3)
    out = butterworth_lowpass(x, ButterworthConfig(zero_phase=False))
    ratio = np.sqrt(np.mean(out[1024:] ** 2)) / np.sqrt(np.mean(x[1024:] ** 2))
    assert ratio == pytest.approx(1 / np.sqrt(2), rel=0.02)


def test_nyquist_is_removed():
    x = np.where(np.arange(256) % 2 == 0, 1.0, -1.0)
    out = butterworth_lowpass(x)
    assert np.sqrt(np.mean(out ** 2)) < 0.2


def test_filter_is_linear(rng):
    x, y = rng.normal(size=64), rng.normal(size=64)
    combined = butterworth_lowpass(2.5 * x - 0.7 * y)
    assert np.allclose(combined, 2.5 * butterworth_lowpass(x) - 0.7 * butterworth_lowpass(y), atol=1e-9)


def test_causal_matches_scipy(rng):
    x = rng.normal(size=50)
    cfg = ButterworthConfig(order_N=2, cutoff_Wn=0.3, zero_phase=False)
    b, a = signal.butter(2, 0.3)
    expected, _ = signal.lfilter(b, a, x, zi=signal.lfilter_zi(b, a) * x[0])
    assert np.allclose(butterworth_lowpass(x, cfg), expected)


def test_short_sequence_is_rejected():
    with pytest.raises(ValueError, match="too short"):
        butterworth_lowpass(np.ones(7))


@pytest.mark.parametrize("wn", [0.0, 1.0, 1.5])
def test_cutoff_outside_unit_interval(wn):
    with pytest.raises(ValueError):
        ButterworthConfig(cutoff_Wn=wn)


def test_find_peaks_example():
    peaks = find_peaks([0, 1, 0, 2, 0])
    assert [p.index for p in peaks] == [1, 3]
    assert [p.height for p in peaks] == [1.0, 2.0]


@pytest.mark.parametrize("values", [[1, 1, 1, 1], [0, 1, 2, 3], [3, 2, 1, 0], [0, 1, 1]])
def test_no_peaks(values):
    assert find_peaks(values) == []


def test_plateau_reports_first_sample():
    assert [p.index for p in find_peaks([0, 1, 1, 0])] == [1]


def test_min_height_filters():
    assert [p.index for p in find_peaks([0, 1, 0, 2, 0], min_height=1.5)] == [3]


def test_short_input_is_rejected():
    with pytest.raises(ValueError):
        find_peaks([1, 2])


def test_matches_brute_force_on_random_sequences(rng):
    for _ in range(1000):
        v = rng.integers(0, 4, size=int(rng.integers(3, 65))).astype(float)
        assert [p.index for p in find_peaks(v)] == brute_force_peaks(list(v))


@given(st.lists(st.integers(min_value=0, max_value=5), min_size=3, max_size=40))
def test_matches_brute_force(values):
    assert [p.index for p in find_peaks(values)] == brute_force_peaks(values)


def test_peak_width_at_half_height():
    assert find_peaks([0, 1, 3, 1, 0])[0].width == 1
    assert find_peaks([0, 2, 3, 2, 0])[0].width == 3


def test_troughs():
    assert find_troughs([2, 0, 2]) == [1]
    assert find_troughs([2, 0, 0, 2]) == [1]


def test_suppress_close_peaks():
    peaks = [Peak(10, 1.0, 2), Peak(14, 0.5, 2), Peak(30, 0.8, 2)]
    assert [p.index for p in suppress_close_peaks(peaks, 10)] == [10, 30]
    assert suppress_close_peaks(peaks, 0) == peaks


def test_smoothing_reduces_peak_count(rng):
    x = rng.normal(size=500)
    assert len(find_peaks(butterworth_lowpass(x))) <= len(find_peaks(x))


def deduplicated(matrix):
    return detect_with_config(matrix, ButterworthConfig(), DEDUPLICATED_DETECT)


def two_bumps(rows=(30, 40), dt=0.1):
    t = np.arange(100)
    column = sum(np.exp(-((t - r) ** 2) / 8.0) for r in rows)
    values = np.zeros((100, 3))
    values[:, 0] = column
    return WaterfallMatrix(values, dt=dt, dx=0.8)


def test_default_detection_keeps_every_peak_above_height():
    matrix = two_bumps()
    expected = find_peaks(butterworth_lowpass(matrix.values[:, 0]), 0.06)
    events = detect_entries(matrix)
    assert [e.entry_row for e in events] == [p.index for p in expected]
    assert len(events) == 2
    assert [e.peak for e in events] == expected


def test_separation_merges_close_peaks():
    matrix = two_bumps()
    assert len(detect_entries(matrix, min_separation_s=1.5)) == 1
    assert len(deduplicated(matrix)) == 1
    assert len(detect_entries(matrix, min_separation_s=0.5)) == 2


def test_median_baseline_shifts_the_height_test():
    t = np.arange(100)
    values = np.zeros((100, 2))
    values[:, 0] = 0.3 + 0.002 * t + 0.04 * np.exp(-((t - 50) ** 2) / 8.0)
    matrix = WaterfallMatrix(values, dt=0.1, dx=0.8)
    (event,) = detect_entries(matrix)
    assert event.peak.height > 0.4
    assert detect_entries(matrix, baseline="median") == []


def test_zero_matrix_has_no_entries():
    assert detect_entries(WaterfallMatrix(np.zeros((100, 4)), dt=0.1, dx=0.8)) == []


def test_entries_of_separated_vehicles(separated):
    matrix, truth = separated
    events = deduplicated(matrix)
    visible = truth.visible()
    assert len(events) == len(visible) == 3
    for event, vehicle in zip(events, visible):
        assert abs(event.entry_row - vehicle.entry_row) <= 2
        assert event.entry_time_s == pytest.approx(event.entry_row * matrix.dt)
    assert [e.vehicle_id for e in events] == [1, 2, 3]


def test_detection_is_scale_invariant(separated):
    matrix, _ = separated
    scaled = preprocess_matrix(matrix.with_values(matrix.values * 5.0))
    assert [e.entry_row for e in deduplicated(scaled)] == [e.entry_row for e in deduplicated(matrix)]


def test_entry_column_out_of_range(separated):
    matrix, _ = separated
    with pytest.raises(ValueError, match="entry column"):
        detect_entries(matrix, entry_col=matrix.n)
