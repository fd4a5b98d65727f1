"""
Non-paralyzable SPAD model with a count-rate-dependent dead time t_d(lambda).

Rates are in counts per second, times in seconds. The curve is keyed to the
observed (registered) rate.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from errors import ConfigurationError, DomainError, UsageError

logger = logging.getLogger(__name__)

# Anchors follow the measured SPCM-AQRH behaviour: 23.3 ns plateau below
# ~4 Mcps, rising past 4 Mcps, above 30 ns from the low 20s Mcps and
# saturating near 31.5 ns.
DEFAULT_CURVE_POINTS: Tuple[Tuple[float, float], ...] = (
    (0.0, 23.3e-9),
    (1.0e6, 23.3e-9),
    (4.0e6, 24.0e-9),
    (8.0e6, 25.6e-9),
    (12.0e6, 27.4e-9),
    (16.0e6, 29.2e-9),
    (20.0e6, 30.5e-9),
    (25.0e6, 31.2e-9),
    (30.0e6, 31.5e-9),
    (50.0e6, 31.5e-9),
)


@dataclass(frozen=True)
class DeadTimeCurve:
    """Tabulated t_d(lambda), piecewise-linear with clamped extrapolation."""

    lambdas: Tuple[float, ...]
    dead_times: Tuple[float, ...]

    def __post_init__(self):
        xs = tuple(float(x) for x in self.lambdas)
        ys = tuple(float(y) for y in self.dead_times)
        if not xs:
            raise ConfigurationError("❌ Dead-time curve is empty")
        if not all(math.isfinite(v) for v in xs + ys):
            raise ConfigurationError("❌ Dead-time curve entries must be finite numbers")
        if len(xs) != len(ys):
            raise ConfigurationError(
                f"❌ Dead-time curve has {len(xs)} rates but {len(ys)} dead times"
            )
        if any(x < 0 for x in xs):
            raise ConfigurationError("❌ Dead-time curve rates must be non-negative")
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ConfigurationError("❌ Dead-time curve rates must be strictly increasing")
        if any(not (y > 0) for y in ys):
            raise ConfigurationError("❌ Dead-time curve values must be positive")
        object.__setattr__(self, "lambdas", xs)
        object.__setattr__(self, "dead_times", ys)

    @classmethod
    def from_points(cls, points: Iterable[Sequence[float]]) -> "DeadTimeCurve":
        points = list(points)
        return cls(tuple(p[0] for p in points), tuple(p[1] for p in points))

    @classmethod
    def from_measurements(cls, points: Iterable[Sequence[float]]) -> "DeadTimeCurve":
        """Build a curve from unsorted (lambda, t_d) pairs; duplicate rates are averaged."""
        merged = {}
        for lam, t_d in points:
            merged.setdefault(float(lam), []).append(float(t_d))
        return cls.from_points((lam, sum(v) / len(v)) for lam, v in sorted(merged.items()))

    @classmethod
    def constant(cls, t_d: float, upper: float = 100.0e6) -> "DeadTimeCurve":
        return cls((0.0, float(upper)), (float(t_d), float(t_d)))

    @classmethod
    def default(cls) -> "DeadTimeCurve":
        return cls.from_points(DEFAULT_CURVE_POINTS)

    def points(self):
        return list(zip(self.lambdas, self.dead_times))

    def is_monotone(self) -> bool:
        return all(b >= a for a, b in zip(self.dead_times, self.dead_times[1:]))

    def __len__(self) -> int:
        return len(self.lambdas)


class AvailabilityModel(str, Enum):
    EXPONENTIAL = "exponential"
    LINEAR_BOUND = "linear_bound"


def _check_rate(lam: float, name: str = "lambda") -> float:
    lam = float(lam)
    if not lam >= 0:
        raise DomainError(f"❌ {name} must be >= 0, got {lam}")
    return lam


def dead_time_at(curve: DeadTimeCurve, lam: float) -> float:
    if curve is None or len(curve) == 0:
        raise ConfigurationError("❌ Dead-time curve is empty")
    lam = _check_rate(lam)
    return float(np.interp(lam, curve.lambdas, curve.dead_times))


def busy_fraction(lam: float, curve: DeadTimeCurve) -> float:
    """lambda * t_d(lambda): fraction of time spent inside the dead window."""
    lam = _check_rate(lam)
    return lam * dead_time_at(curve, lam)


def availability(lam: float, curve: DeadTimeCurve,
                 model: AvailabilityModel = AvailabilityModel.EXPONENTIAL) -> float:
    busy = busy_fraction(lam, curve)
    model = AvailabilityModel(model)
    if model is AvailabilityModel.LINEAR_BOUND:
        if busy >= 1.0:
            raise DomainError(
                f"❌ Detector saturated under the linear model: lambda*t_d = {busy:.4f} >= 1"
            )
        return 1.0 - busy
    return math.exp(-busy)


def click_probability(p0: float, lam: float, curve: DeadTimeCurve,
                      model: AvailabilityModel = AvailabilityModel.EXPONENTIAL) -> float:
    return float(p0) * availability(lam, curve, model)


def observed_to_true_rate(lam: float, t_d: float) -> float:
    lam = _check_rate(lam)
    product = lam * float(t_d)
    if product >= 1.0:
        raise DomainError(f"❌ lambda*t_d = {product:.4f} >= 1, no finite true rate")
    return lam / (1.0 - product)


def true_to_observed_rate(beta: float, t_d: float) -> float:
    beta = _check_rate(beta, "beta")
    return beta / (1.0 + float(t_d) * beta)


class ArrivalOutcome(str, Enum):
    CLICK = "click"
    SUPPRESSED = "suppressed"
    MISSED = "missed"


@dataclass
class DetectorUnit:
    """
    One detector inside the event loop.

    loading_rate is the configured steady-state observed rate that fixes the
    dead window opened by each click.
    """

    p0: float
    curve: DeadTimeCurve
    loading_rate: float = 0.0
    dead_until: float = 0.0
    _last_arrival: float = field(default=-math.inf, init=False, repr=False)

    def __post_init__(self):
        if not (0.0 < float(self.p0) <= 1.0):
            raise ConfigurationError(f"❌ p0 must be in (0, 1], got {self.p0}")
        _check_rate(self.loading_rate, "loading_rate")

    @property
    def dead_time(self) -> float:
        return dead_time_at(self.curve, self.loading_rate)

    def process_arrival(self, t: float, rng: Optional[np.random.Generator] = None) -> ArrivalOutcome:
        t = float(t)
        if t < self._last_arrival:
            raise UsageError(
                f"❌ Arrival at {t!r} s precedes previous arrival at {self._last_arrival!r} s"
            )
        self._last_arrival = t
        if t < self.dead_until:
            return ArrivalOutcome.SUPPRESSED
        if self.p0 < 1.0:
            if rng is None:
                raise UsageError("❌ An rng stream is required when p0 < 1")
            if rng.random() >= self.p0:
                return ArrivalOutcome.MISSED
        self.dead_until = t + self.dead_time
        return ArrivalOutcome.CLICK

    def reset(self):
        self.dead_until = 0.0
        self._last_arrival = -math.inf


def register_stream(detector: DetectorUnit, timestamps: Iterable[float],
                    rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Feed a sorted arrival stream through the detector; returns click times."""
    clicks = [t for t in timestamps
              if detector.process_arrival(t, rng) is ArrivalOutcome.CLICK]
    return np.asarray(clicks, dtype=float)
