"""Exception types shared across the package."""


class LogHolderError(Exception):
    """Base class for all package errors."""


class QuadratureError(LogHolderError):
    """Raised when an integral does not reach tolerance within the panel budget."""


class SingularEvaluationError(LogHolderError, ValueError):
    """Raised when a singular potential is evaluated at its pole."""


class GridTooCoarseError(LogHolderError, ValueError):
    """Raised when a circle grid cannot resolve the cutoff scale eps."""


class ConfigError(LogHolderError, ValueError):
    """Raised for invalid experiment or family configuration."""
