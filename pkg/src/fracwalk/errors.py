class FracwalkError(Exception):
    """Base class for package errors."""


class DomainError(FracwalkError, ValueError):
    """An argument lies outside the domain where an operation is defined."""


class NumericError(FracwalkError, RuntimeError):
    """A numerical procedure failed to converge or produced unusable values."""


class DivergenceError(NumericError):
    """An improper integral grows without bound under refinement.

    ``report`` holds the partial integrals observed while refining the cutoff.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report or {}


class InsufficientHorizonError(FracwalkError):
    """A path ended before its clock component exceeded the target time."""


class ConfigError(FracwalkError, ValueError):
    """A run configuration violates the schema."""
