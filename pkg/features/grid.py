"""Discrete covering grid over a feature manifold."""
import math
from typing import Optional

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, model_validator

from config.errors import DomainError, GridCompatibilityError
from config.settings import settings
from .space import TWO_PI, FeaturePoint, Manifold, wrap_angle

CellIndex = tuple[int, ...]


class Interval(BaseModel):
    """Half-open extent [lo, hi) of one grid dimension."""

    model_config = ConfigDict(frozen=True)

    lo: float
    hi: float

    @model_validator(mode="after")
    def _ordered(self) -> "Interval":
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.hi > self.lo):
            raise ValueError(f"invalid interval [{self.lo}, {self.hi})")
        return self


class GridSpec(BaseModel):
    """
    Covering grid {Ω_j}: disjoint axis-aligned cells over a bounded domain.

    Cells along a linear dimension are ``[lo + i·d, lo + (i+1)·d)``; angular
    cells are ``[offset + i·dθ, offset + (i+1)·dθ)`` taken mod 2π.
    """

    model_config = ConfigDict(frozen=True)

    manifold: Manifold
    dx: float = Field(gt=0)
    dy: float = Field(gt=0)
    n_theta: int = Field(ge=4)
    dt: float = Field(default=1.0, gt=0)
    dv: float = Field(default=0.5, gt=0)
    x: Interval
    y: Interval
    t: Optional[Interval] = None
    v: Optional[Interval] = None
    theta_offset: float = 0.0

    @model_validator(mode="after")
    def _fibers_match_manifold(self) -> "GridSpec":
        if self.manifold.has_velocity != (self.v is not None):
            raise ValueError(f"{self.manifold.value} grid velocity bounds mismatch")
        if self.manifold.has_time != (self.t is not None):
            raise ValueError(f"{self.manifold.value} grid time bounds mismatch")
        return self

    @property
    def dtheta(self) -> float:
        return TWO_PI / self.n_theta

    @property
    def dims(self) -> tuple[str, ...]:
        return self.manifold.dims

    @property
    def v_max(self) -> float | None:
        """Upper edge of the velocity domain (center of the last v bin)."""
        if self.v is None:
            return None
        return self.v.hi - self.dv / 2

    def _linear(self, name: str) -> tuple[Interval, float]:
        return getattr(self, name), getattr(self, f"d{name}")

    @property
    def shape(self) -> tuple[int, ...]:
        counts = []
        for name in self.dims:
            if name == "theta":
                counts.append(self.n_theta)
            else:
                bounds, width = self._linear(name)
                counts.append(int(math.ceil((bounds.hi - bounds.lo) / width - 1e-9)))
        return tuple(counts)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))

    # ------------------------------------------------------------------
    # Constructors
    # ------------------------------------------------------------------
    @classmethod
    def for_dataset(
        cls,
        manifold: Manifold,
        domain: float | None = None,
        v_max: float | None = None,
        n_frames: int | None = None,
        **widths,
    ) -> "GridSpec":
        """Grid over a square stimulus domain starting at the origin."""
        domain = domain or settings.domain_size
        v_max = settings.v_max if v_max is None else v_max
        dv = widths.get("dv", settings.grid_dv)
        dt = widths.get("dt", settings.grid_dt)
        return cls(
            manifold=manifold,
            dx=widths.get("dx", settings.grid_dx),
            dy=widths.get("dy", settings.grid_dy),
            n_theta=widths.get("n_theta", settings.grid_n_theta),
            dt=dt,
            dv=dv,
            x=Interval(lo=0.0, hi=domain),
            y=Interval(lo=0.0, hi=domain),
            t=Interval(lo=-dt / 2, hi=(n_frames or 1) * dt - dt / 2) if manifold.has_time else None,
            v=Interval(lo=-dv / 2, hi=v_max + dv / 2) if manifold.has_velocity else None,
        )

    @classmethod
    def for_kernel(
        cls,
        manifold: Manifold,
        H: int,
        v_max: float | None = None,
        **widths,
    ) -> "GridSpec":
        """
        Grid centered on the canonical base state.

        Cells are centered on integer multiples of each bin width so that
        binning a path state is a nearest-cell rounding. The spatial radius
        covers the whole advection reach ``H·max(1, v_max)``.
        """
        v_max = settings.v_max if v_max is None else v_max
        dx = widths.get("dx", settings.grid_dx)
        dy = widths.get("dy", settings.grid_dy)
        dt = widths.get("dt", settings.grid_dt)
        dv = widths.get("dv", settings.grid_dv)
        n_theta = widths.get("n_theta", settings.grid_n_theta)
        speed = max(1.0, v_max) if manifold is Manifold.MT else 1.0
        reach = H * speed + 1.0
        nx = int(math.ceil(reach / dx))
        ny = int(math.ceil(reach / dy))
        return cls(
            manifold=manifold,
            dx=dx,
            dy=dy,
            n_theta=n_theta,
            dt=dt,
            dv=dv,
            x=Interval(lo=-(nx + 0.5) * dx, hi=(nx + 0.5) * dx),
            y=Interval(lo=-(ny + 0.5) * dy, hi=(ny + 0.5) * dy),
            t=Interval(lo=-dt / 2, hi=H * dt + dt / 2) if manifold.has_time else None,
            v=Interval(lo=-dv / 2, hi=v_max + dv / 2) if manifold.has_velocity else None,
            theta_offset=-TWO_PI / n_theta / 2,
        )

    # ------------------------------------------------------------------
    # Quantization
    # ------------------------------------------------------------------
    def quantize_array(self, coords: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """
        Vectorized quantization.

        Args:
            coords: Array of shape (n, len(dims)) in the order of ``dims``

        Returns:
            Tuple of (integer cell indices of shape (n, len(dims)), in-bounds mask)
        """
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        cells = np.empty(coords.shape, dtype=np.int64)
        inside = np.ones(coords.shape[0], dtype=bool)
        for axis, (name, count) in enumerate(zip(self.dims, self.shape)):
            column = coords[:, axis]
            if name == "theta":
                rel = np.mod(column - self.theta_offset, TWO_PI)
                idx = np.floor(rel / self.dtheta).astype(np.int64)
                idx = np.minimum(idx, count - 1)
            else:
                bounds, width = self._linear(name)
                idx = np.floor((column - bounds.lo) / width).astype(np.int64)
                inside &= (idx >= 0) & (idx < count)
            cells[:, axis] = idx
        return cells, inside

    def ravel(self, cells: np.ndarray) -> np.ndarray:
        """Linear cell ids for in-bounds cell index rows."""
        cells = np.atleast_2d(cells)
        return np.ravel_multi_index(tuple(cells.T), self.shape).astype(np.int64)

    def unravel(self, ids: np.ndarray) -> np.ndarray:
        return np.stack(np.unravel_index(np.asarray(ids, dtype=np.int64), self.shape), axis=1)

    def center_array(self, cells: np.ndarray) -> np.ndarray:
        """Cell midpoints for an array of cell index rows."""
        cells = np.atleast_2d(np.asarray(cells, dtype=float))
        centers = np.empty(cells.shape, dtype=float)
        for axis, name in enumerate(self.dims):
            if name == "theta":
                centers[:, axis] = np.mod(self.theta_offset + (cells[:, axis] + 0.5) * self.dtheta, TWO_PI)
            else:
                bounds, width = self._linear(name)
                centers[:, axis] = bounds.lo + (cells[:, axis] + 0.5) * width
        return centers


def quantize(p: FeaturePoint, g: GridSpec) -> CellIndex:
    """
    Cell of the covering grid containing ``p``.

    Raises:
        DomainError: if the position, time or velocity lies outside the grid bounds
    """
    cells, inside = g.quantize_array(p.coords(g.dims)[None, :])
    if not inside[0]:
        raise DomainError(f"point {p} lies outside the grid bounds")
    return tuple(int(i) for i in cells[0])


def cell_center(c: CellIndex, g: GridSpec) -> FeaturePoint:
    """Midpoint of cell ``c``; inverse of :func:`quantize`."""
    if len(c) != len(g.dims) or any(i < 0 or i >= n for i, n in zip(c, g.shape)):
        raise DomainError(f"cell {c} outside grid of shape {g.shape}")
    center = g.center_array(np.asarray(c)[None, :])[0]
    values = dict(zip(g.dims, center))
    values["theta"] = wrap_angle(values["theta"])
    return FeaturePoint(**values)


def check_compatibility(coords: np.ndarray, g: GridSpec) -> None:
    """
    Enforce the dataset/grid rule: every cell holds at most one point.

    Args:
        coords: Array of shape (n, len(dims)) in the order of ``g.dims``

    Raises:
        DomainError: if a point lies outside the grid
        GridCompatibilityError: naming the first pair of points sharing a cell
    """
    cells, inside = g.quantize_array(coords)
    if not np.all(inside):
        raise DomainError(f"point {int(np.flatnonzero(~inside)[0])} lies outside the grid bounds")
    ids = g.ravel(cells)
    order = np.argsort(ids, kind="stable")
    dup = np.flatnonzero(ids[order][1:] == ids[order][:-1])
    if dup.size:
        first, second = sorted((int(order[dup[0]]), int(order[dup[0] + 1])))
        logger.debug(f"Grid collision between points {first} and {second}")
        raise GridCompatibilityError(first, second, tuple(int(i) for i in cells[first]))
