"""Configuration module for the cortical grouping toolkit."""
from .settings import Settings, settings
from . import logger  # Initialize logging
from .errors import (
    CorticalError,
    DomainError,
    GridCompatibilityError,
    KernelEstimationError,
    SpectralError,
    ShapeMismatchError,
    ManifestMismatchError,
    ConfigError,
)

__all__ = [
    "Settings",
    "settings",
    "CorticalError",
    "DomainError",
    "GridCompatibilityError",
    "KernelEstimationError",
    "SpectralError",
    "ShapeMismatchError",
    "ManifestMismatchError",
    "ConfigError",
]
