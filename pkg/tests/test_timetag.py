import numpy as np
import pytest
from scipy.stats import chisquare

from errors import (ConfigurationError, ConvergenceError, EstimationError, InsufficientDataError,
                    TimestampFormatError)
from process.detector import DeadTimeCurve
from process.timetag import (DeadTimeMode, TimestampStream, apply_dead_time, estimate_dead_time,
                             generate_poisson_stream, interarrival_histogram, read_timestamp_file,
                             sweep_dead_time, write_timestamp_file)


# ===== generator =====
def test_poisson_count_statistics():
    stream = generate_poisson_stream(1e6, 1.0, seed=7)
    assert abs(len(stream) - 1e6) <= 4 * np.sqrt(1e6)


def test_zero_duration_is_empty():
    assert len(generate_poisson_stream(1e6, 0.0, seed=1)) == 0


def test_same_seed_same_stream():
    a = generate_poisson_stream(5e6, 1e-3, seed=3)
    b = generate_poisson_stream(5e6, 1e-3, seed=3)
    c = generate_poisson_stream(5e6, 1e-3, seed=4)
    assert np.array_equal(a.ticks, b.ticks)
    assert not np.array_equal(a.ticks, c.ticks)


def test_ticks_are_quantized_and_sorted():
    stream = generate_poisson_stream(20e6, 1e-4, seed=0)
    assert np.all(stream.ticks % 8 == 0)
    assert np.all(np.diff(stream.ticks) > 0)


def test_non_positive_rate_rejected():
    with pytest.raises(ConfigurationError):
        generate_poisson_stream(0.0, 1e-3, seed=0)


# ===== dead-time filter =====
def test_constant_dead_time_throughput():
    beta, t_d = 50e6, 23.3e-9
    stream = generate_poisson_stream(beta, 0.01, seed=11)
    out = apply_dead_time(stream, mode=DeadTimeMode.CONSTANT, constant_t_d=t_d)
    assert out.rate == pytest.approx(beta / (1 + t_d * beta), rel=0.02)
    assert np.diff(out.ticks).min() >= 23_300


def test_zero_dead_time_is_identity():
    stream = generate_poisson_stream(5e6, 1e-3, seed=2)
    out = apply_dead_time(stream, mode=DeadTimeMode.CONSTANT, constant_t_d=0.0)
    assert np.array_equal(out.ticks, stream.ticks)


def test_second_event_inside_window_removed():
    stream = TimestampStream(np.array([0, 1_000]), 8, 1_000)
    out = apply_dead_time(stream, mode=DeadTimeMode.CONSTANT, constant_t_d=23.3e-9)
    assert out.ticks.tolist() == [0]


def test_rate_dependent_with_flat_curve_matches_constant(flat_curve):
    stream = generate_poisson_stream(30e6, 2e-3, seed=5)
    flat = apply_dead_time(stream, flat_curve, DeadTimeMode.RATE_DEPENDENT)
    const = apply_dead_time(stream, mode=DeadTimeMode.CONSTANT, constant_t_d=23.3e-9)
    assert np.array_equal(flat.ticks, const.ticks)


def test_fixed_point_failure_keeps_trace(default_curve):
    stream = generate_poisson_stream(20e6, 1e-3, seed=9)
    with pytest.raises(ConvergenceError) as info:
        apply_dead_time(stream, default_curve, max_iterations=1)
    assert len(info.value.trace) == 1


def test_rate_dependent_needs_curve():
    stream = generate_poisson_stream(1e6, 1e-3, seed=0)
    with pytest.raises(ConfigurationError):
        apply_dead_time(stream, None, DeadTimeMode.RATE_DEPENDENT)


# ===== histogram and estimate =====
def test_histogram_bins_gaps():
    stream = TimestampStream(np.array([0, 10_000, 35_000]), 8, 35_000)
    hist = interarrival_histogram(stream, bin_width=1e-9)
    assert hist.counts[10] == 1
    assert hist.counts[25] == 1
    assert hist.n_gaps == 2


def test_histogram_needs_two_timestamps():
    with pytest.raises(InsufficientDataError):
        interarrival_histogram(TimestampStream(np.array([5]), 8, 10))


def test_filtered_stream_has_empty_bins_below_dead_time():
    stream = generate_poisson_stream(40e6, 2e-3, seed=8)
    out = apply_dead_time(stream, mode=DeadTimeMode.CONSTANT, constant_t_d=23.3e-9)
    hist = interarrival_histogram(out, bin_width=0.5e-9)
    assert hist.counts[:46].sum() == 0


def test_unfiltered_gaps_follow_exponential():
    beta, width = 5e6, 20e-9
    stream = generate_poisson_stream(beta, 0.02, seed=21)
    hist = interarrival_histogram(stream, bin_width=width, max_gap=200e-9)
    k = np.arange(hist.counts.size)
    expected = np.exp(-beta * k * width) - np.exp(-beta * (k + 1) * width)
    expected = expected / expected.sum() * hist.counts.sum()
    assert chisquare(hist.counts, expected).pvalue > 1e-3
    assert hist.counts[0] > hist.counts[-1]


def test_estimate_constant_dead_time():
    stream = generate_poisson_stream(50e6, 0.01, seed=13)
    out = apply_dead_time(stream, mode=DeadTimeMode.CONSTANT, constant_t_d=23.3e-9)
    estimate = estimate_dead_time(interarrival_histogram(out, bin_width=0.5e-9))
    assert 22.8e-9 <= estimate <= 23.8e-9


def test_estimate_long_dead_time():
    stream = generate_poisson_stream(40e6, 0.01, seed=14)
    out = apply_dead_time(stream, mode=DeadTimeMode.CONSTANT, constant_t_d=31.5e-9)
    estimate = estimate_dead_time(interarrival_histogram(out, bin_width=0.5e-9))
    assert abs(estimate - 31.5e-9) <= 0.5e-9


def test_all_zero_histogram_fails():
    stream = TimestampStream(np.array([0, 500_000]), 8, 500_000)
    hist = interarrival_histogram(stream, bin_width=0.5e-9, max_gap=200e-9)
    with pytest.raises(EstimationError):
        estimate_dead_time(hist)


# ===== files =====
def test_timestamp_file_round_trip(tmp_path):
    stream = generate_poisson_stream(2e6, 1e-3, seed=1)
    path = write_timestamp_file(stream, str(tmp_path / "tags.txt"))
    loaded = read_timestamp_file(path)
    assert np.array_equal(loaded.ticks, stream.ticks)


def test_malformed_line_reports_number(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("100\n200\nabc\n300\n", encoding="utf-8")
    with pytest.raises(TimestampFormatError) as info:
        read_timestamp_file(str(path))
    assert info.value.line_number == 3
    assert "line 3" in str(info.value)


def test_descending_file_rejected(tmp_path):
    path = tmp_path / "desc.txt"
    path.write_text("300\n200\n", encoding="utf-8")
    with pytest.raises(TimestampFormatError):
        read_timestamp_file(str(path))


def test_empty_file_has_insufficient_data(tmp_path):
    path = tmp_path / "empty.txt"
    path.write_text("", encoding="utf-8")
    stream = read_timestamp_file(str(path))
    assert len(stream) == 0
    with pytest.raises(InsufficientDataError):
        interarrival_histogram(stream)


# ===== sweep =====
def test_sweep_recovers_default_curve(default_curve):
    points = sweep_dead_time([1e6, 5e6, 20e6, 40e6], default_curve, duration=0.0,
                             seed=42, events_per_point=200_000)
    assert len(points) == 4
    for p in points:
        assert abs(p.t_d_estimate - p.t_d_truth) <= max(0.5e-9, 0.03 * p.t_d_truth)
    estimates = [p.t_d_estimate for p in points]
    assert estimates == sorted(estimates)


def test_sweep_endpoints(default_curve):
    low, high = sweep_dead_time([1e6, 150e6], default_curve, duration=0.0,
                                seed=3, events_per_point=200_000)
    assert low.t_d_estimate == pytest.approx(23.3e-9, rel=0.05)
    assert high.t_d_estimate == pytest.approx(31.5e-9, rel=0.05)


def test_sweep_flat_truth_is_flat(flat_curve):
    points = sweep_dead_time([2e6, 10e6, 30e6], flat_curve, duration=0.0,
                             seed=0, events_per_point=100_000)
    for p in points:
        assert abs(p.t_d_estimate - 23.3e-9) <= 0.5e-9


def test_sweep_single_rate_and_empty(flat_curve):
    assert len(sweep_dead_time([10e6], flat_curve, duration=5e-3)) == 1
    with pytest.raises(ConfigurationError):
        sweep_dead_time([], flat_curve, duration=5e-3)


def test_sweep_independent_of_workers(default_curve):
    serial = sweep_dead_time([3e6, 12e6], default_curve, duration=2e-3, seed=8)
    parallel = sweep_dead_time([3e6, 12e6], default_curve, duration=2e-3, seed=8, workers=2)
    assert serial == parallel
