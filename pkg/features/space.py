"""Feature manifolds M3, M0, MT and their angular conventions."""
from enum import Enum
import math
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from config.errors import DomainError

TWO_PI = 2.0 * math.pi


class Manifold(str, Enum):
    """Feature manifold a point or kernel lives on."""

    M3 = "M3"  # (x, y, theta)
    M0 = "M0"  # (x, y, theta, v) at a fixed frame
    MT = "MT"  # (x, y, t, theta, v)

    @property
    def dims(self) -> tuple[str, ...]:
        return _DIMS[self]

    @property
    def has_velocity(self) -> bool:
        return self is not Manifold.M3

    @property
    def has_time(self) -> bool:
        return self is Manifold.MT


_DIMS = {
    Manifold.M3: ("x", "y", "theta"),
    Manifold.M0: ("x", "y", "theta", "v"),
    Manifold.MT: ("x", "y", "t", "theta", "v"),
}


def wrap_angle(theta):
    """
    Wrap an angle (or array of angles) into [0, 2π).

    Raises:
        DomainError: if any input is not finite
    """
    arr = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"angle must be finite, got {theta!r}")
    wrapped = np.mod(arr, TWO_PI)
    # np.mod can round tiny negatives up to exactly 2π
    wrapped = np.where(wrapped >= TWO_PI, 0.0, wrapped)
    if np.ndim(theta) == 0:
        return float(wrapped)
    return wrapped


def angular_distance(a, b, identify_orientation: bool = False):
    """
    Distance on the circle between two angles.

    Args:
        a: First angle(s) in radians
        b: Second angle(s) in radians
        identify_orientation: Measure mod π (orientation) instead of mod 2π (direction)

    Returns:
        Distance in [0, π], or in [0, π/2] when ``identify_orientation`` is set
    """
    diff = np.mod(np.asarray(a, dtype=float) - np.asarray(b, dtype=float), TWO_PI)
    dist = np.minimum(diff, TWO_PI - diff)
    if identify_orientation:
        dist = np.minimum(dist, math.pi - dist)
    if np.ndim(dist) == 0:
        return float(dist)
    return dist


class FeaturePoint(BaseModel):
    """A stimulus element on one of the feature manifolds."""

    model_config = ConfigDict(frozen=True)

    x: float
    y: float
    theta: float
    t: Optional[float] = None
    v: Optional[float] = None

    @field_validator("theta")
    @classmethod
    def _wrap_theta(cls, value: float) -> float:
        return wrap_angle(value)

    @model_validator(mode="after")
    def _check_fibers(self) -> "FeaturePoint":
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("position must be finite")
        if self.v is not None and not self.v >= 0:
            raise ValueError(f"velocity must be >= 0, got {self.v}")
        if self.t is not None and not self.t >= 0:
            raise ValueError(f"time must be >= 0, got {self.t}")
        if self.t is not None and self.v is None:
            raise ValueError("a timed point must carry a velocity (MT)")
        return self

    @property
    def manifold(self) -> Manifold:
        if self.v is None:
            return Manifold.M3
        if self.t is None:
            return Manifold.M0
        return Manifold.MT

    def coords(self, dims: tuple[str, ...]) -> np.ndarray:
        """Coordinates in the order of ``dims``; missing fibers raise DomainError."""
        values = []
        for name in dims:
            value = getattr(self, name)
            if value is None:
                raise DomainError(f"point on {self.manifold.value} has no '{name}' coordinate")
            values.append(value)
        return np.asarray(values, dtype=float)
