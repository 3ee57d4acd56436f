import math
from decimal import Decimal, getcontext

import numpy as np
import pytest
from pydantic import ValidationError

from core.detect import find_peaks
from core.forward_sim import (FiberLayout, Medium, Scene, VehicleSpec, count_response_peaks, gauge_response,
                              quasi_static_deformation, response_profile, scene_with_snr, synthesize_waterfall,
                              vehicle_response)
from data.scenarios import car_spec, medium_truck_spec, truck_spec

getcontext().prec = 50
PI = Decimal("3.14159265358979323846264338327950288419716939937510")


def deformation_oracle(F, G, nu, dx, dy, dz):
    F, G, nu, dx, dy, dz = (Decimal(repr(float(v))) for v in (F, G, nu, dx, dy, dz))
    r = (dx * dx + dy * dy + dz * dz).sqrt()
    ratio = dz / r
    p = dx / (r * r) * (ratio + (2 * nu - 1) / (1 + ratio))
    return F / (4 * PI * G) * p


def gauge_oracle(F, G, nu, dx, dy, dz, l):
    half = Decimal(repr(float(l))) / 2
    front = deformation_oracle(F, G, nu, Decimal(repr(float(dx))) + half, dy, dz)
    rear = deformation_oracle(F, G, nu, Decimal(repr(float(dx))) - half, dy, dz)
    return (front - rear) / Decimal(repr(float(l)))


def test_deformation_vanishes_directly_above_load(medium):
    assert quasi_static_deformation(1e4, medium, 0.0, 2.0, 0.5) == 0.0


def test_deformation_is_linear_in_load(medium):
    one = quasi_static_deformation(1e3, medium, 1.5, 2.0, 0.3)
    assert quasi_static_deformation(7e3, medium, 1.5, 2.0, 0.3) == pytest.approx(7 * one, rel=1e-12)


def test_unit_prefactor_case():
    medium = Medium(shear_modulus_G=1e7, poisson_nu=0.25)
    F = 4 * math.pi * 1e7
    r = math.sqrt(3.0)
    expected = (1 / 3) * (1 / r + (-0.5) / (1 + 1 / r))
    assert quasi_static_deformation(F, medium, 1.0, 1.0, 1.0) == pytest.approx(expected, rel=1e-12)


def test_deformation_and_gauge_match_high_precision_oracle(rng):
    for _ in range(20):
        F = rng.uniform(1e3, 1e5)
        nu = rng.uniform(0.0, 0.49)
        dx, dy, dz = rng.uniform(-20, 20), rng.uniform(0, 10), rng.uniform(0.01, 2.0)
        l = rng.uniform(0.5, 20.0)
        medium = Medium(shear_modulus_G=1e7, poisson_nu=nu)
        expected = float(deformation_oracle(F, 1e7, nu, dx, dy, dz))
        assert quasi_static_deformation(F, medium, dx, dy, dz) == pytest.approx(expected, rel=1e-10)
        expected = float(gauge_oracle(F, 1e7, nu, dx, dy, dz, l))
        assert gauge_response(F, medium, dx, dy, dz, l) == pytest.approx(expected, rel=1e-10)


def test_gauge_spot_value(medium):
    expected = float(gauge_oracle(1e4, 1e7, 0.25, 2.0, 1.0, 0.05, 1.0))
    assert gauge_response(1e4, medium, 2.0, 1.0, 0.05, 1.0) == pytest.approx(expected, rel=1e-10)


def test_gauge_at_zero_offset(medium):
    l = 4.0
    half = quasi_static_deformation(1e4, medium, l / 2, 1.0, 0.05)
    assert gauge_response(1e4, medium, 0.0, 1.0, 0.05, l) == pytest.approx(2 * half / l, rel=1e-12)


def test_short_gauge_approaches_derivative(medium):
    h = 1e-5
    derivative = (quasi_static_deformation(1e4, medium, 2 + h, 1.0, 0.05)
                  - quasi_static_deformation(1e4, medium, 2 - h, 1.0, 0.05)) / (2 * h)
    assert gauge_response(1e4, medium, 2.0, 1.0, 0.05, 1e-4) == pytest.approx(derivative, rel=1e-6)


def test_non_positive_depth_is_rejected(medium):
    with pytest.raises(ValueError):
        quasi_static_deformation(1e4, medium, 1.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        gauge_response(1e4, medium, 1.0, 1.0, 0.05, 0.0)


def test_vectorized_matches_scalar(medium):
    grid = np.linspace(-5, 5, 11)
    vector = gauge_response(1e4, medium, grid, 2.0, 0.05, 10.0)
    assert list(vector) == pytest.approx([gauge_response(1e4, medium, float(x), 2.0, 0.05, 10.0) for x in grid])


@pytest.mark.parametrize("weights", [(0.25, 0.25, 0.25, 0.25), (0.3, 0.2, 0.2, 0.3)])
def test_response_is_symmetric_for_balanced_wheels(medium, fiber, weights):
    v = VehicleSpec(load_F=2.5e4, wheel_weights_w=weights, velocity=20.0)
    grid = np.linspace(0.1, 25, 120)
    assert vehicle_response(v, medium, fiber, grid) == pytest.approx(
        vehicle_response(v, medium, fiber, -grid), rel=1e-9, abs=1e-18)


def test_weights_must_sum_to_one():
    with pytest.raises(ValidationError):
        VehicleSpec(load_F=1e4, wheel_weights_w=(0.5, 0.5, 0.5, 0.5), velocity=10.0)


def test_long_vehicle_shows_two_lobes(medium, fiber):
    truck = truck_spec(80.0, 0.0)
    car = car_spec(80.0, 0.0)
    assert count_response_peaks(response_profile(truck, medium, fiber)[1]) >= 2
    assert count_response_peaks(response_profile(car, medium, fiber)[1]) == 1


def test_single_lobe_relies_on_relative_height(medium, fiber):
    profile = response_profile(car_spec(80.0, 0.0), medium, fiber)[1]
    heights = sorted((p.height for p in find_peaks(profile)), reverse=True)
    assert count_response_peaks(profile, rel_height=0.0) == len(heights) > 1
    assert 0.06 < heights[1] / heights[0] < 0.5
    assert count_response_peaks(profile) == 1


def test_peak_amplitude_depends_weakly_on_length(medium, fiber):
    long_peak = response_profile(truck_spec(80.0, 0.0), medium, fiber)[1].max()
    short_peak = response_profile(medium_truck_spec(80.0, 0.0), medium, fiber)[1].max()
    assert long_peak == pytest.approx(short_peak, rel=0.2)


def test_peak_decreases_with_lateral_offset(medium, fiber):
    peaks = [response_profile(car_spec(80.0, 0.0, lateral_offset_dy=dy), medium, fiber)[1].max()
             for dy in (1.0, 2.0, 3.0, 4.0, 5.0)]
    assert all(a > b for a, b in zip(peaks, peaks[1:]))


def test_empty_noiseless_scene_is_zero():
    matrix, truth = synthesize_waterfall(Scene(duration=2.0))
    assert matrix.shape == (20, 100)
    assert not matrix.values.any()
    assert truth.vehicles == []


def test_single_vehicle_ridge_follows_truth():
    scene = Scene(vehicles=[car_spec(80.0, 1.0)], duration=6.0)
    matrix, truth = synthesize_waterfall(scene)
    (vehicle,) = truth.vehicles
    margin = 5.0 / matrix.dx
    checked = 0
    for row, col in zip(vehicle.rows, vehicle.cols):
        if margin <= col <= matrix.n - 1 - margin:
            assert abs(int(np.argmax(matrix.values[row])) - col) <= 1
            checked += 1
    assert checked > 10


def test_synthesis_is_deterministic():
    scene = Scene(vehicles=[car_spec(80.0, 1.0)], duration=6.0, noise_sigma=1e-6, rng_seed=7)
    a, _ = synthesize_waterfall(scene)
    b, _ = synthesize_waterfall(scene)
    assert np.array_equal(a.values, b.values)
    c, _ = synthesize_waterfall(scene.model_copy(update={"rng_seed": 8}))
    assert not np.array_equal(a.values, c.values)


def test_synthesis_is_linear_in_load():
    base = Scene(vehicles=[car_spec(80.0, 1.0)], duration=4.0)
    heavier = Scene(vehicles=[car_spec(80.0, 1.0, tonnes=7.5)], duration=4.0)
    a, _ = synthesize_waterfall(base)
    b, _ = synthesize_waterfall(heavier)
    assert np.allclose(b.values, 3 * a.values, rtol=1e-12, atol=0)


def test_peak_is_proportional_to_load():
    peaks = []
    for tonnes in (1.0, 2.0, 3.0, 4.0):
        matrix, _ = synthesize_waterfall(Scene(vehicles=[car_spec(80.0, 1.0, tonnes=tonnes)], duration=4.0))
        peaks.append(matrix.values.max())
    assert [p / peaks[0] for p in peaks] == pytest.approx([1.0, 2.0, 3.0, 4.0], rel=1e-9)


def test_matrix_carries_gauge_length():
    matrix, _ = synthesize_waterfall(Scene(fiber=FiberLayout(gauge_length_l=4.0), duration=1.0))
    assert matrix.gauge_length_m == 4.0


def test_truth_covers_only_the_fiber_span():
    scene = Scene(vehicles=[car_spec(72.0, 1.0)], duration=8.0)
    _, truth = synthesize_waterfall(scene)
    v = truth.vehicles[0]
    assert v.cols.min() >= 0 and v.cols.max() <= 99
    assert v.entry_row == 10
    assert v.velocity_kmh == pytest.approx(72.0)


def test_snr_sets_noise_relative_to_peak():
    scene = Scene(vehicles=[car_spec(80.0, 1.0)], duration=4.0)
    clean, _ = synthesize_waterfall(scene)
    noisy = scene_with_snr(scene, 10.0)
    assert noisy.noise_sigma == pytest.approx(clean.values.max() / 10.0)
    with pytest.raises(ValueError):
        scene_with_snr(Scene(duration=1.0), 10.0)


def test_noise_floor_is_folded_normal():
    sigma = 0.1
    matrix, _ = synthesize_waterfall(Scene(duration=16.0, noise_sigma=sigma, rng_seed=3))
    assert matrix.values.min() >= 0.0
    assert matrix.values.mean() == pytest.approx(sigma * math.sqrt(2 / math.pi), rel=0.03)
