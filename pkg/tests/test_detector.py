import math

import numpy as np
import pytest

from errors import ConfigurationError, DomainError, UsageError
from process.detector import (ArrivalOutcome, AvailabilityModel, DeadTimeCurve, DetectorUnit,
                              availability, busy_fraction, click_probability, dead_time_at,
                              observed_to_true_rate, register_stream, true_to_observed_rate)


# ===== curve =====
def test_default_curve_endpoints(default_curve):
    assert dead_time_at(default_curve, 1e6) == pytest.approx(23.3e-9)
    assert dead_time_at(default_curve, 30e6) == pytest.approx(31.5e-9)
    assert default_curve.is_monotone()


def test_interpolation_and_clamping(default_curve):
    assert dead_time_at(default_curve, 6e6) == pytest.approx(24.8e-9)
    assert dead_time_at(default_curve, 500e6) == pytest.approx(31.5e-9)


def test_constant_curve_any_rate():
    curve = DeadTimeCurve.from_points([(0.0, 20e-9), (100e6, 20e-9)])
    for lam in (0.0, 3e6, 99e6, 1e9):
        assert dead_time_at(curve, lam) == pytest.approx(20e-9)


def test_negative_rate_rejected(default_curve):
    with pytest.raises(DomainError):
        dead_time_at(default_curve, -1.0)


@pytest.mark.parametrize("points", [
    [],
    [(1e6, 23e-9), (1e6, 24e-9)],
    [(2e6, 23e-9), (1e6, 24e-9)],
    [(0.0, 0.0)],
    [(-1.0, 20e-9)],
    [(0.0, 20e-9), (float("nan"), 25e-9)],
    [(0.0, 20e-9), (1e6, float("nan"))],
    [(0.0, 20e-9), (float("inf"), 25e-9)],
])
def test_bad_curves_rejected(points):
    with pytest.raises(ConfigurationError):
        DeadTimeCurve.from_points(points)


def test_from_measurements_sorts_and_averages():
    curve = DeadTimeCurve.from_measurements([(5e6, 26e-9), (1e6, 23e-9), (5e6, 24e-9)])
    assert curve.lambdas == (1e6, 5e6)
    assert curve.dead_times[1] == pytest.approx(25e-9)


# ===== availability =====
@pytest.mark.parametrize("model", list(AvailabilityModel))
def test_idle_detector_available(default_curve, model):
    assert availability(0.0, default_curve, model) == 1.0


def test_availability_closed_forms():
    curve = DeadTimeCurve.constant(20e-9)
    lam_one = 1.0 / 20e-9
    assert availability(lam_one, curve) == pytest.approx(math.exp(-1.0), rel=1e-9)
    with pytest.raises(DomainError):
        availability(lam_one * 1.001, curve, AvailabilityModel.LINEAR_BOUND)
    assert availability(lam_one / 2, curve, AvailabilityModel.LINEAR_BOUND) == pytest.approx(0.5)


def test_linear_bound_below_exponential():
    curve = DeadTimeCurve.constant(25e-9)
    for x in np.linspace(0.0, 0.99, 100):
        lam = x / 25e-9
        linear = availability(lam, curve, AvailabilityModel.LINEAR_BOUND)
        expo = availability(lam, curve, AvailabilityModel.EXPONENTIAL)
        assert linear <= expo + 1e-15


def test_click_probability_values():
    curve = DeadTimeCurve.constant(25e-9)
    lam = 0.2 / 25e-9
    assert click_probability(0.6, 0.0, curve) == pytest.approx(0.6)
    assert click_probability(1.0, lam, curve) == pytest.approx(math.exp(-0.2), rel=1e-9)
    assert click_probability(1.0, lam, curve, AvailabilityModel.LINEAR_BOUND) == pytest.approx(0.8)


def test_busy_fraction_values():
    assert busy_fraction(0.0, DeadTimeCurve.default()) == 0.0
    assert busy_fraction(10e6, DeadTimeCurve.constant(23.3e-9)) == pytest.approx(0.233)
    assert busy_fraction(25e6, DeadTimeCurve.constant(31e-9)) == pytest.approx(0.775)


# ===== rate conversion =====
def test_observed_to_true_rate():
    assert observed_to_true_rate(0.0, 25e-9) == 0.0
    lam = 0.5 / 25e-9
    assert observed_to_true_rate(lam, 25e-9) == pytest.approx(2 * lam)
    with pytest.raises(DomainError):
        observed_to_true_rate(1.0 / 25e-9, 25e-9)


def test_rate_round_trip():
    beta = 40e6
    lam = true_to_observed_rate(beta, 25e-9)
    assert observed_to_true_rate(lam, 25e-9) == pytest.approx(beta, rel=1e-12)


# ===== event loop =====
def test_click_then_suppression(flat_curve):
    det = DetectorUnit(p0=1.0, curve=flat_curve)
    assert det.process_arrival(1e-6) is ArrivalOutcome.CLICK
    assert det.dead_until == pytest.approx(1e-6 + 23.3e-9)
    dead_until = det.dead_until
    assert det.process_arrival(dead_until - 1e-12) is ArrivalOutcome.SUPPRESSED
    assert det.dead_until == dead_until


def test_non_monotone_arrival_rejected(flat_curve):
    det = DetectorUnit(p0=1.0, curve=flat_curve)
    det.process_arrival(2e-6)
    with pytest.raises(UsageError):
        det.process_arrival(1e-6)


def test_sub_unity_p0_needs_rng(flat_curve):
    det = DetectorUnit(p0=0.5, curve=flat_curve)
    with pytest.raises(UsageError):
        det.process_arrival(0.0)


def test_missed_arrival_leaves_state(flat_curve):
    det = DetectorUnit(p0=0.3, curve=flat_curve)
    rng = np.random.default_rng(4)
    outcomes = [det.process_arrival(t * 1e-6, rng) for t in range(1, 200)]
    assert ArrivalOutcome.MISSED in outcomes
    assert ArrivalOutcome.CLICK in outcomes


def test_non_paralyzable_throughput(flat_curve):
    beta, t_d, duration = 10e6, 23.3e-9, 0.1
    rng = np.random.default_rng(2024)
    arrivals = np.cumsum(rng.exponential(1.0 / beta, size=int(beta * duration * 1.1)))
    arrivals = arrivals[arrivals <= duration]
    det = DetectorUnit(p0=1.0, curve=flat_curve)
    clicks = register_stream(det, arrivals)
    assert np.all(np.diff(clicks) >= t_d * (1 - 1e-9))
    expected = beta / (1.0 + t_d * beta)
    assert clicks.size / duration == pytest.approx(expected, rel=0.02)


def test_reset(flat_curve):
    det = DetectorUnit(p0=1.0, curve=flat_curve)
    det.process_arrival(1e-6)
    det.reset()
    assert det.dead_until == 0.0
    assert det.process_arrival(0.0) is ArrivalOutcome.CLICK
