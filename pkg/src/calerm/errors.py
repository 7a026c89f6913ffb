"""Exception types raised across the package."""


class CalermError(Exception):
    """Base class for all package errors."""


class DomainError(CalermError, ValueError):
    """Input outside the domain of a function (non-finite values, bad intervals)."""


class ArgumentError(CalermError, ValueError):
    """Malformed arguments: dimension mismatches, out-of-range parameters."""


class CalibrationError(CalermError, ValueError):
    """Huber calibration requested with no noise and no complexity."""


class UnboundedSetError(CalermError, ValueError):
    """Operation needs a bounded constraint set."""


class DegenerateError(CalermError, ValueError):
    """Sample carries no information (e.g. all draws are zero)."""


class NumericError(CalermError, ArithmeticError):
    """Non-finite value encountered during a computation."""


class ConfigError(CalermError, ValueError):
    """Invalid configuration document; ``key`` names the offending entry."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")
