"""Exception types shared across the package."""

__all__ = [
    "HyperColorError",
    "FormatError",
    "TruncatedFileError",
    "ValidationError",
    "ConfigError",
    "SolverError",
]


class HyperColorError(Exception):
    """Base class for all package errors."""


class FormatError(HyperColorError):
    """A binary or text payload does not match its declared format."""


class TruncatedFileError(FormatError):
    """A file ended before the payload its header promises."""


class ValidationError(HyperColorError, ValueError):
    """In-memory data violates a documented invariant."""


class ConfigError(HyperColorError):
    """A run configuration is unusable (missing file, bad range, ...)."""


class SolverError(HyperColorError):
    """The linear solver failed to reach the requested residual.

    Carries the achieved relative residual so callers can report how far
    the solve got before giving up.
    """

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual
