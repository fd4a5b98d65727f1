"""
Exception hierarchy shared by the simulator, the analysis helpers and the CLI.

main.py maps ConfigurationError to exit code 2 (nothing was computed) and any
other RieError to exit code 1.
"""

from typing import List, Optional, Tuple


class RieError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(RieError, ValueError):
    """Invalid parameters, curve tables or grids."""


class ScenarioValidationError(ConfigurationError):
    """Scenario file failed schema validation."""


class CurveFormatError(ConfigurationError):
    """Dead-time curve CSV could not be parsed."""


class DomainError(RieError, ValueError):
    """A closed form was evaluated outside its validity domain."""


class UsageError(RieError, RuntimeError):
    """An operation was called in the wrong mode or with a bad event order."""


class InsufficientDataError(RieError):
    """Not enough events to build a statistic."""


class EstimationError(RieError):
    """No histogram bin qualifies as the dead-time onset."""


class DegenerateAttackError(RieError):
    """The aligned-basis click probability is zero, so r is undefined."""


class ConvergenceError(RieError):
    """Fixed-point iteration did not settle; `trace` keeps every step."""

    def __init__(self, message: str, trace: Optional[List[Tuple[float, float, float]]] = None):
        super().__init__(message)
        self.trace = list(trace or [])


class TimestampFormatError(RieError, ValueError):
    """Malformed timestamp file line."""

    def __init__(self, message: str, line_number: int):
        super().__init__(message)
        self.line_number = line_number
