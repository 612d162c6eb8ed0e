"""Feature manifolds, angle conventions and the covering grid."""
from .space import TWO_PI, FeaturePoint, Manifold, angular_distance, wrap_angle
from .grid import CellIndex, GridSpec, Interval, cell_center, check_compatibility, quantize

__all__ = [
    "TWO_PI",
    "FeaturePoint",
    "Manifold",
    "angular_distance",
    "wrap_angle",
    "CellIndex",
    "GridSpec",
    "Interval",
    "cell_center",
    "check_compatibility",
    "quantize",
]
