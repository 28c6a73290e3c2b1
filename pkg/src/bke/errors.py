"""Exception types shared across the package."""


class BKEError(Exception):
    """Base class for all errors raised by bke."""


class InvalidInputError(BKEError, ValueError):
    """Malformed arguments: wrong shapes, non-finite values, bad settings."""


class DegenerateDataError(BKEError, ValueError):
    """Data that carries no usable information (e.g. all points identical)."""


class ConditioningError(BKEError, ArithmeticError):
    """A matrix factorization failed even after the jitter retries."""


class OptimizationFailedError(BKEError, RuntimeError):
    """Every evaluation of an objective was degenerate."""
