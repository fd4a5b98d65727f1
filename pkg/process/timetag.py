"""
Synthetic time-tagger streams and dead-time extraction from inter-arrival
histograms.

Timestamps are held as int64 picoseconds so gap arithmetic and binning are
exact; the `timestamps` property converts to seconds.
"""

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence

import numpy as np

from errors import (
    ConfigurationError,
    ConvergenceError,
    EstimationError,
    InsufficientDataError,
    TimestampFormatError,
)
from process.detector import DeadTimeCurve, dead_time_at

logger = logging.getLogger(__name__)

PS = 1e-12
DEFAULT_RESOLUTION = 8e-12
DEFAULT_BIN_WIDTH = 0.5e-9
DEFAULT_MAX_GAP = 200e-9
DEFAULT_MIN_COUNT = 2
FIXED_POINT_MAX_ITER = 20
FIXED_POINT_RTOL = 1e-6


def _to_ps(seconds: float) -> int:
    return int(round(float(seconds) / PS))


@dataclass(frozen=True)
class TimestampStream:
    ticks: np.ndarray
    resolution_ps: int = 8
    duration_ps: int = 0

    def __post_init__(self):
        ticks = np.asarray(self.ticks, dtype=np.int64)
        if ticks.size and np.any(np.diff(ticks) <= 0):
            raise ConfigurationError("❌ Timestamps must be strictly increasing")
        if ticks.size and (ticks[0] < 0 or ticks[-1] > self.duration_ps):
            raise ConfigurationError("❌ Timestamps must lie inside [0, duration]")
        object.__setattr__(self, "ticks", ticks)

    @property
    def timestamps(self) -> np.ndarray:
        return self.ticks * PS

    @property
    def duration(self) -> float:
        return self.duration_ps * PS

    @property
    def resolution(self) -> float:
        return self.resolution_ps * PS

    @property
    def rate(self) -> float:
        if self.duration_ps <= 0:
            return 0.0
        return len(self.ticks) / self.duration

    def __len__(self) -> int:
        return int(self.ticks.size)

    def with_ticks(self, ticks: np.ndarray) -> "TimestampStream":
        return TimestampStream(ticks, self.resolution_ps, self.duration_ps)


def generate_poisson_stream(beta: float, duration: float, seed: int,
                            resolution: float = DEFAULT_RESOLUTION) -> TimestampStream:
    """True arrival process at rate beta, quantized to the tagger resolution."""
    res_ps = max(1, _to_ps(resolution))
    duration_ps = max(0, _to_ps(duration))
    if duration_ps == 0:
        return TimestampStream(np.empty(0, dtype=np.int64), res_ps, 0)
    if not beta > 0:
        raise ConfigurationError(f"❌ beta must be > 0, got {beta}")

    rng = np.random.default_rng(seed)
    expected = beta * duration
    chunk = int(expected + 6 * math.sqrt(expected) + 16)
    times = []
    t_last = 0.0
    while True:
        arrivals = t_last + np.cumsum(rng.exponential(1.0 / beta, size=chunk))
        times.append(arrivals)
        t_last = float(arrivals[-1])
        if t_last > duration:
            break
    arrivals = np.concatenate(times)
    arrivals = arrivals[arrivals <= duration]
    ticks = (np.floor(arrivals / (res_ps * PS)).astype(np.int64)) * res_ps
    ticks = np.unique(ticks[ticks <= duration_ps])
    return TimestampStream(ticks, res_ps, duration_ps)


class DeadTimeMode(str, Enum):
    CONSTANT = "constant"
    RATE_DEPENDENT = "rate_dependent"


def _filter_non_paralyzable(ticks: np.ndarray, window_ps: int) -> np.ndarray:
    """Keep an event iff it is at least window_ps past the last kept event."""
    if window_ps <= 0 or ticks.size == 0:
        return ticks
    kept = []
    idx = 0
    n = ticks.size
    while idx < n:
        kept.append(idx)
        idx = int(np.searchsorted(ticks, ticks[idx] + window_ps, side="left"))
    return ticks[np.asarray(kept, dtype=np.int64)]


def apply_dead_time(stream: TimestampStream, curve: Optional[DeadTimeCurve] = None,
                    mode: DeadTimeMode = DeadTimeMode.RATE_DEPENDENT,
                    constant_t_d: Optional[float] = None,
                    max_iterations: int = FIXED_POINT_MAX_ITER,
                    rtol: float = FIXED_POINT_RTOL) -> TimestampStream:
    """
    Non-paralyzable filtering of a true arrival stream.

    In rate-dependent mode the window is t_d(lambda_obs) where lambda_obs is
    the output rate, found by fixed-point iteration from the input rate.
    """
    mode = DeadTimeMode(mode)
    if mode is DeadTimeMode.CONSTANT:
        if constant_t_d is None:
            raise ConfigurationError("❌ constant mode needs constant_t_d")
        return stream.with_ticks(_filter_non_paralyzable(stream.ticks, _to_ps(constant_t_d)))

    if curve is None:
        raise ConfigurationError("❌ rate-dependent mode needs a dead-time curve")
    if len(stream) == 0 or stream.duration_ps <= 0:
        return stream

    lam = stream.rate
    trace = []
    filtered = {}
    for _ in range(max_iterations):
        t_d = dead_time_at(curve, lam)
        window = _to_ps(t_d)
        if window in filtered:
            # picosecond rounding can cycle between neighbouring windows
            logger.debug("dead-time fixed point cycles at window=%d ps, stopping", window)
            return stream.with_ticks(filtered[window])
        kept = _filter_non_paralyzable(stream.ticks, window)
        filtered[window] = kept
        new_lam = kept.size / stream.duration
        trace.append((lam, t_d, new_lam))
        if abs(new_lam - lam) <= rtol * lam:
            logger.debug("dead-time fixed point: lambda_obs=%.6g t_d=%.6g after %d steps",
                         new_lam, t_d, len(trace))
            return stream.with_ticks(kept)
        lam = new_lam
    raise ConvergenceError(
        f"❌ Rate-dependent dead time did not converge in {max_iterations} iterations "
        f"(last lambda_obs={lam:.6g})",
        trace,
    )


@dataclass(frozen=True)
class InterArrivalHistogram:
    bin_width: float
    counts: np.ndarray
    origin: float = 0.0

    def __post_init__(self):
        if not self.bin_width > 0:
            raise ConfigurationError(f"❌ bin_width must be > 0, got {self.bin_width}")
        object.__setattr__(self, "counts", np.asarray(self.counts, dtype=np.int64))

    @property
    def edges(self) -> np.ndarray:
        return self.origin + self.bin_width * np.arange(self.counts.size + 1)

    @property
    def n_gaps(self) -> int:
        return int(self.counts.sum())

    def rows(self):
        lower = self.edges[:-1]
        return [(float(a), int(c)) for a, c in zip(lower, self.counts)]


def interarrival_histogram(stream: TimestampStream, bin_width: float = DEFAULT_BIN_WIDTH,
                           max_gap: float = DEFAULT_MAX_GAP) -> InterArrivalHistogram:
    if not bin_width > 0:
        raise ConfigurationError(f"❌ bin_width must be > 0, got {bin_width}")
    if len(stream) < 2:
        raise InsufficientDataError(
            f"❌ insufficient data: {len(stream)} timestamps, need at least 2"
        )
    bin_ps = max(1, _to_ps(bin_width))
    n_bins = max(1, int(math.ceil(_to_ps(max_gap) / bin_ps)))
    gaps = np.diff(stream.ticks)
    idx = gaps // bin_ps
    idx = idx[idx < n_bins]
    counts = np.bincount(idx, minlength=n_bins)
    return InterArrivalHistogram(bin_ps * PS, counts)


def estimate_dead_time(hist: InterArrivalHistogram, min_count: int = DEFAULT_MIN_COUNT) -> float:
    """Lower edge of the first bin holding at least min_count gaps."""
    hits = np.flatnonzero(hist.counts >= int(min_count))
    if hits.size == 0:
        raise EstimationError(f"❌ No histogram bin reaches min_count={min_count}")
    return float(hist.origin + hits[0] * hist.bin_width)


@dataclass(frozen=True)
class SweepPoint:
    true_rate: float
    lambda_observed: float
    t_d_estimate: float
    t_d_truth: float


def _sweep_point(args) -> SweepPoint:
    beta, curve, duration, bin_width, max_gap, min_count, seed = args
    stream = generate_poisson_stream(beta, duration, seed)
    filtered = apply_dead_time(stream, curve, DeadTimeMode.RATE_DEPENDENT)
    hist = interarrival_histogram(filtered, bin_width, max_gap)
    estimate = estimate_dead_time(hist, min_count)
    lam_obs = filtered.rate
    return SweepPoint(float(beta), lam_obs, estimate, dead_time_at(curve, lam_obs))


def sweep_dead_time(rates: Sequence[float], truth_curve: DeadTimeCurve, duration: float,
                    bin_width: float = DEFAULT_BIN_WIDTH, seed: int = 0,
                    min_count: int = DEFAULT_MIN_COUNT, max_gap: float = DEFAULT_MAX_GAP,
                    events_per_point: Optional[int] = None,
                    workers: int = 1) -> List[SweepPoint]:
    """
    generate -> filter -> histogram -> estimate, once per true rate.

    Point i uses seed + i. With events_per_point set, each point runs for
    events_per_point / beta seconds instead of `duration`.
    """
    rates = [float(r) for r in rates]
    if not rates:
        raise ConfigurationError("❌ sweep needs at least one rate")
    tasks = []
    for i, beta in enumerate(rates):
        point_duration = events_per_point / beta if events_per_point else duration
        tasks.append((beta, truth_curve, point_duration, bin_width, max_gap, min_count, seed + i))

    logger.info("🚀 Dead-time sweep over %d rates (workers=%d)", len(tasks), workers)
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
            points = list(pool.map(_sweep_point, tasks))
    else:
        points = [_sweep_point(t) for t in tasks]
    for p in points:
        logger.info("✅ beta=%.4g cps -> lambda_obs=%.4g cps, t_d=%.4g s (truth %.4g s)",
                    p.true_rate, p.lambda_observed, p.t_d_estimate, p.t_d_truth)
    return points


def read_timestamp_file(path: str, resolution: float = DEFAULT_RESOLUTION) -> TimestampStream:
    """One integer per line, picoseconds since stream start, ascending."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"❌ Timestamp file not found: {path}")
    ticks = []
    with open(path, "r", encoding="utf-8") as f:
        for line_number, raw in enumerate(f, start=1):
            text = raw.strip()
            if not text:
                continue
            try:
                value = int(text)
            except ValueError:
                raise TimestampFormatError(
                    f"❌ {path}: line {line_number}: not an integer picosecond value: {text!r}",
                    line_number,
                ) from None
            if value < 0 or (ticks and value < ticks[-1]):
                raise TimestampFormatError(
                    f"❌ {path}: line {line_number}: timestamps must be non-negative and ascending",
                    line_number,
                )
            ticks.append(value)
    ticks = np.unique(np.asarray(ticks, dtype=np.int64))
    duration_ps = int(ticks[-1]) if ticks.size else 0
    return TimestampStream(ticks, max(1, _to_ps(resolution)), duration_ps)


def write_timestamp_file(stream: TimestampStream, path: str) -> str:
    """เขียน timestamp (หน่วย ps) บรรทัดละค่า"""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for tick in stream.ticks:
            f.write(f"{int(tick)}\n")
    return path
