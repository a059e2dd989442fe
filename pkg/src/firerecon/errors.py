"""Exception types shared across the package."""


class FireReconError(Exception):
    """Base class for package errors."""


class ConfigError(FireReconError, ValueError):
    """Invalid configuration value or missing configuration field."""


class DomainError(FireReconError, ValueError):
    """Input outside the mathematical domain of an operation."""


class ShapeError(FireReconError, ValueError):
    """Array shape or length mismatch."""


class ModeError(FireReconError, RuntimeError):
    """Operation not available in the current optimizer mode."""


class FormatError(FireReconError, ValueError):
    """Malformed binary or text file."""
