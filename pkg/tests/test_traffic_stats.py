import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from pydantic import ValidationError

from core.detect import Peak
from core.track import Trajectory
from core.traffic_stats import (ProfileQuery, SegmentQuery, TrafficRecord, count_accuracy, format_record,
                                interval_counts, profile_stats, segment_stats, traffic_report, truncate)


def profile(position=20.0, start=0.0, end=60.0):
    return ProfileQuery(position=position, window_start=start, window_end=end)


def test_harmonic_mean_at_profile(make_trajectory):
    trajs = [make_trajectory(1, 30.0, 1.0), make_trajectory(2, 60.0, 5.0)]
    record = profile_stats(trajs, profile())
    assert record.vehicle_count == 2
    assert record.mean_speed_kmh == pytest.approx(40.0)
    assert record.flow == pytest.approx(2 / 60)
    assert record.density == pytest.approx(2 / 60 / 40.0)
    assert record.vehicle_ids == [1, 2]


def test_equal_speeds_give_equal_means(make_trajectory):
    trajs = [make_trajectory(k, 50.0, 2.0 * k) for k in range(3)]
    tms = profile_stats(trajs, profile()).mean_speed_kmh
    sms = segment_stats(trajs, SegmentQuery(seg_start=0.0, seg_end=100.0, instant=6.0)).mean_speed_kmh
    assert tms == pytest.approx(50.0)
    assert sms == pytest.approx(50.0)


def test_profile_identity(make_trajectory, rng):
    for _ in range(10):
        trajs = [make_trajectory(k, float(rng.uniform(30, 120)), float(rng.uniform(0, 40))) for k in range(5)]
        record = profile_stats(trajs, profile())
        assert record.density * record.mean_speed_kmh == pytest.approx(record.flow, rel=1e-12)


def test_empty_profile():
    record = profile_stats([], profile())
    assert record.vehicle_count == 0
    assert record.mean_speed_kmh is None
    assert (record.flow, record.density) == (0.0, 0.0)


def test_window_is_half_open_and_additive(make_trajectory, rng):
    trajs = [make_trajectory(k, float(rng.uniform(40, 100)), float(rng.uniform(0, 55))) for k in range(8)]
    whole = profile_stats(trajs, profile(start=0.0, end=60.0)).vehicle_count
    first = profile_stats(trajs, profile(start=0.0, end=30.0)).vehicle_count
    second = profile_stats(trajs, profile(start=30.0, end=60.0)).vehicle_count
    assert first + second == whole


def test_zero_speed_at_profile_names_vehicle(make_trajectory, monkeypatch):
    traj = make_trajectory(7, 50.0, 1.0)
    monkeypatch.setattr(traj, "speed_kmh_at", lambda row: 0.0)
    with pytest.raises(ValueError, match="vehicle 7"):
        profile_stats([traj], profile())


def test_segment_arithmetic_mean_and_length_scaling(make_trajectory):
    trajs = [make_trajectory(1, 30.0, 0.0), make_trajectory(2, 60.0, 0.0)]
    short = segment_stats(trajs, SegmentQuery(seg_start=0.0, seg_end=80.0, instant=3.0))
    long = segment_stats(trajs, SegmentQuery(seg_start=0.0, seg_end=160.0, instant=3.0))
    assert short.vehicle_count == 2
    assert short.mean_speed_kmh == pytest.approx(45.0)
    assert short.density == pytest.approx(2 / 80)
    assert short.flow == pytest.approx(2 / 80 * 45.0)
    assert long.density == pytest.approx(short.density / 2)
    assert long.flow == pytest.approx(short.flow / 2)


def test_segment_window_average(make_trajectory):
    trajs = [make_trajectory(1, 72.0, 0.0)]
    record = segment_stats(trajs, SegmentQuery(seg_start=0.0, seg_end=40.0, window=(0.0, 4.0), step_s=0.3))
    assert record.vehicle_count == pytest.approx(0.5)
    assert record.mean_speed_kmh == pytest.approx(72.0)


def test_empty_segment():
    record = segment_stats([], SegmentQuery(seg_start=0.0, seg_end=10.0, instant=1.0))
    assert record.mean_speed_kmh is None
    assert record.flow == 0.0


@pytest.mark.parametrize("kwargs", [
    {"seg_start": 0.0, "seg_end": 10.0},
    {"seg_start": 0.0, "seg_end": 10.0, "instant": 1.0, "window": (0.0, 2.0)},
    {"seg_start": 5.0, "seg_end": 5.0, "instant": 1.0},
])
def test_invalid_segment_queries(kwargs):
    with pytest.raises(ValidationError):
        SegmentQuery(**kwargs)


def test_empty_profile_window():
    with pytest.raises(ValidationError):
        profile(start=10.0, end=10.0)


def test_interval_counts_by_class(make_trajectory):
    trajs = [make_trajectory(1, 60.0, 1.0), make_trajectory(2, 60.0, 20.0, vehicle_class="truck"),
             make_trajectory(3, 60.0, 70.0, rows=300)]
    rows = interval_counts(trajs, 20.0, 0.0, 120.0, 60.0)
    assert [(r["start"], r["end"]) for r in rows] == [(0.0, 60.0), (60.0, 120.0)]
    assert [(r["total"], r["car"], r["truck"]) for r in rows] == [(2, 1, 1), (1, 1, 0)]


@given(st.lists(st.floats(min_value=20, max_value=150), min_size=1, max_size=6))
@settings(deadline=None)
def test_time_mean_never_exceeds_arithmetic_mean(speeds):
    trajs = []
    for k, v in enumerate(speeds):
        slope = v / 3.6 * 0.1 / 0.8
        rows = np.arange(30 * k, 30 * k + 600)
        trajs.append(Trajectory(k, rows, np.zeros(600, dtype=int), np.array([-slope * 30 * k, slope]), v, 0.0, "car",
                                0.1, 0.8, entry_peak=Peak(30 * k, 1.0, 2)))
    record = profile_stats(trajs, profile(end=120.0))
    assert record.vehicle_count == len(speeds)
    assert record.mean_speed_kmh <= sum(speeds) / len(speeds) + 1e-9


@pytest.mark.parametrize("count,speed,density", [(4, 56.38, 0.0011), (3, 59.93, 0.0008), (2, 59.27, 0.0005),
                                                 (6, 54.07, 0.0018)])
def test_profile_report_rows(count, speed, density):
    flow = count / 60
    row = format_record(TrafficRecord("profile", count, speed, flow, flow / speed))
    assert row["average_velocity"] == speed
    assert row["flow"] == truncate(flow, 2)
    assert row["density"] == density
    assert row["units"]["flow"] == "veh/s"


@pytest.mark.parametrize("density,speed,flow", [(0.01, 55.97, 0.55), (0.005, 55.97, 0.27), (0.01, 65.76, 0.65),
                                                (0.005, 65.76, 0.32)])
def test_segment_report_rows(density, speed, flow):
    row = format_record(TrafficRecord("segment", density * 100, speed, density * speed, density))
    assert row["flow"] == flow
    assert row["density"] == density
    assert row["raw"]["flow"] == density * speed


def test_report_keeps_missing_speed():
    report = traffic_report([TrafficRecord("profile", 0, None, 0.0, 0.0)], [])
    assert report["profiles"][0]["average_velocity"] is None
    assert report["schema_version"] == 1


@pytest.mark.parametrize("value,places,expected", [(0.6576, 2, 0.65), (0.0011823, 4, 0.0011), (-1.239, 2, -1.23),
                                                   (2.0, 2, 2.0)])
def test_truncate(value, places, expected):
    assert truncate(value, places) == expected


@pytest.mark.parametrize("detected,reference,expected", [(5, 7, 71.42), (6, 6, 100.0), (11, 13, 84.61),
                                                         (10, 12, 83.33), (0, 5, 0.0), (14, 7, 0.0), (8, 7, 85.71)])
def test_count_accuracy(detected, reference, expected):
    assert count_accuracy(detected, reference) == expected


def test_count_accuracy_needs_reference():
    with pytest.raises(ValueError):
        count_accuracy(3, 0)
