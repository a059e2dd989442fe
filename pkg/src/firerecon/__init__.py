"""Reconstruction of temperature and fuel density fields of flames from images."""

from .errors import ConfigError, DomainError, FireReconError, ModeError, ShapeError

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DomainError",
    "FireReconError",
    "ModeError",
    "ShapeError",
    "__version__",
]
