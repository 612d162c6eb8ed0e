"""Exception hierarchy shared by all toolkit packages."""


class CorticalError(Exception):
    """Base class for every error raised by the toolkit."""


class DomainError(CorticalError, ValueError):
    """A feature value lies outside its admissible domain or grid bounds."""


class GridCompatibilityError(CorticalError):
    """Two dataset points fall into the same covering-grid cell."""

    def __init__(self, first: int, second: int, cell: tuple[int, ...]):
        self.first = first
        self.second = second
        self.cell = cell
        super().__init__(f"points {first} and {second} share grid cell {cell}")


class KernelEstimationError(CorticalError):
    """Simulated paths left the covering grid beyond the configured tolerance."""


class SpectralError(CorticalError):
    """The eigensolver failed or returned pairs that fail the residual check."""


class ShapeMismatchError(CorticalError, ValueError):
    """Matrices or label vectors have incompatible sizes."""


class ManifestMismatchError(CorticalError):
    """An input file does not match the hash recorded in its manifest."""


class ConfigError(CorticalError):
    """A run configuration is invalid or references missing inputs."""
