"""Advection-diffusion processes on the feature manifolds and their discrete paths."""
from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from config.hashing import derive_seed
from config.settings import settings
from features import FeaturePoint, Manifold
from features.space import TWO_PI
from .params import KernelParams

# consecutive path ids sharing one Philox stream
NOISE_BLOCK = 1024


class ProcessKind(str, Enum):
    """Which stochastic system drives the paths."""

    SE2 = "se2"  # drift X1 on M3, diffusion on theta
    CONTOUR = "contour"  # drift X1 on M0, diffusion on theta and v
    TRAJECTORY = "trajectory"  # drift X5 on MT, diffusion on theta and v

    @property
    def manifold(self) -> Manifold:
        return {
            ProcessKind.SE2: Manifold.M3,
            ProcessKind.CONTOUR: Manifold.M0,
            ProcessKind.TRAJECTORY: Manifold.MT,
        }[self]

    @property
    def noise_dims(self) -> int:
        return 1 if self is ProcessKind.SE2 else 2


class ProcessSpec(BaseModel):
    """
    Process type plus its diffusion coefficients.

    ``kappa`` diffuses the angle and ``alpha`` the velocity fiber, both per unit
    step. Zero values give the degenerate noiseless process; ``alpha`` is
    ignored for SE2.
    """

    model_config = ConfigDict(frozen=True)

    kind: ProcessKind
    kappa: float = Field(ge=0)
    alpha: float = Field(default=0.0, ge=0)

    @property
    def manifold(self) -> Manifold:
        return self.kind.manifold

    def header(self) -> dict:
        alpha = 0.0 if self.kind is ProcessKind.SE2 else self.alpha
        return {"kind": self.kind.value, "kappa": self.kappa, "alpha": alpha}


# ----------------------------------------------------------------------
# Drift
# ----------------------------------------------------------------------
def _drift_arrays(kind: ProcessKind, theta: np.ndarray, v: Optional[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Spatial advection (dx, dy) of one unit step."""
    if kind is ProcessKind.TRAJECTORY:
        return v * np.cos(theta), v * np.sin(theta)
    return -np.sin(theta), np.cos(theta)


def drift(process: ProcessSpec, state: FeaturePoint) -> np.ndarray:
    """
    Deterministic advection component A(γ) of one unit step.

    Returns:
        Tangent increment in the order of the process manifold's dims, e.g.
        ``(dx, dy, dθ)`` for SE2 and ``(dx, dy, dt, dθ, dv)`` for TRAJECTORY
    """
    coords = dict(zip(process.manifold.dims, state.coords(process.manifold.dims)))
    dx, dy = _drift_arrays(process.kind, np.asarray(coords["theta"]), np.asarray(coords.get("v", 0.0)))
    increment = {name: 0.0 for name in process.manifold.dims}
    increment["x"] = float(dx)
    increment["y"] = float(dy)
    if process.manifold.has_time:
        increment["t"] = 1.0
    return np.asarray([increment[name] for name in process.manifold.dims], dtype=float)


def reflect_velocity(v: np.ndarray, v_max: float) -> np.ndarray:
    """Reflect velocities into [0, v_max] (mirror at both walls)."""
    period = 2.0 * v_max
    if period <= 0:
        return np.zeros_like(v)
    folded = np.mod(np.abs(v), period)
    return np.where(folded > v_max, period - folded, folded)


# ----------------------------------------------------------------------
# Noise streams
# ----------------------------------------------------------------------
def path_noise(seed: int, path_ids: np.ndarray, H: int, dims: int) -> np.ndarray:
    """
    Standard gaussian increments for a set of paths.

    Path ids are grouped in fixed blocks of ``NOISE_BLOCK`` consecutive ids and
    each block draws from its own Philox stream: the key is derived from the run
    seed and the block index occupies the high counter word. Path ``i`` is row
    ``i % NOISE_BLOCK`` of its block's draw, so it receives the same increments
    no matter how paths are sharded.

    Returns:
        Array of shape (len(path_ids), H, dims)
    """
    key = derive_seed(seed, "kernel-paths")
    path_ids = np.asarray(path_ids, dtype=np.int64)
    blocks = path_ids // NOISE_BLOCK
    out = np.empty((len(path_ids), H, dims), dtype=float)
    for block in np.unique(blocks):
        counter = np.array([0, 0, 0, int(block)], dtype=np.uint64)
        rng = np.random.Generator(np.random.Philox(key=key, counter=counter))
        rows = blocks == block
        out[rows] = rng.standard_normal((NOISE_BLOCK, H, dims))[path_ids[rows] % NOISE_BLOCK]
    return out


# ----------------------------------------------------------------------
# Path integration
# ----------------------------------------------------------------------
class PathState:
    """Mutable batch of path states (one entry per path) on a process manifold."""

    def __init__(self, process: ProcessSpec, start: FeaturePoint, n: int):
        dims = process.manifold.dims
        coords = dict(zip(dims, start.coords(dims)))
        self.kind = process.kind
        self.x = np.full(n, coords["x"], dtype=float)
        self.y = np.full(n, coords["y"], dtype=float)
        self.theta = np.full(n, coords["theta"], dtype=float)
        self.t = np.full(n, coords["t"], dtype=float) if "t" in coords else None
        self.v = np.full(n, coords["v"], dtype=float) if "v" in coords else None

    def advance(self, dtheta: np.ndarray, dv: Optional[np.ndarray], v_max: float) -> None:
        """γ_{h+1} = γ_h + A(γ_h) + B(γ_h)·δ_h with the increments already scaled."""
        dx, dy = _drift_arrays(self.kind, self.theta, self.v)
        self.x = self.x + dx
        self.y = self.y + dy
        if self.t is not None:
            self.t = self.t + 1.0
        self.theta = np.mod(self.theta + dtheta, TWO_PI)
        if self.v is not None and dv is not None:
            self.v = reflect_velocity(self.v + dv, v_max)

    def stack(self, dims: tuple[str, ...]) -> np.ndarray:
        """States as an array of shape (n, len(dims))."""
        return np.stack([getattr(self, name) for name in dims], axis=1)


def integrate(
    process: ProcessSpec,
    start: FeaturePoint,
    increments: np.ndarray,
    v_max: float,
) -> np.ndarray:
    """
    Integrate a batch of discrete paths from a common start.

    Args:
        process: Process spec (fixes drift and state space)
        start: Start state on the process manifold
        increments: Scaled control increments of shape (n, H, noise_dims)
        v_max: Upper reflecting wall of the velocity fiber

    Returns:
        States of shape (H+1, n, len(dims))
    """
    dims = process.manifold.dims
    n, H = increments.shape[0], increments.shape[1]
    state = PathState(process, start, n)
    states = np.empty((H + 1, n, len(dims)), dtype=float)
    states[0] = state.stack(dims)
    for h in range(H):
        dv = increments[:, h, 1] if increments.shape[2] > 1 else None
        state.advance(increments[:, h, 0], dv, v_max)
        states[h + 1] = state.stack(dims)
    return states


def scale_noise(process: ProcessSpec, noise: np.ndarray) -> np.ndarray:
    """Scale raw gaussian increments by (κ, α)."""
    scale = np.asarray([process.kappa, process.alpha][: noise.shape[2]], dtype=float)
    return noise * scale


def simulate_path(
    process: ProcessSpec,
    start: FeaturePoint,
    params: KernelParams,
    path_id: int,
) -> np.ndarray:
    """
    Simulate path ``path_id`` of a kernel run: ``params.H`` unit steps.

    Noise enters only θ (scaled by κ) and v (scaled by α); θ is wrapped and v
    is reflected at 0 and the grid's ``v_max``. The result equals row
    ``path_id`` of the batch the estimator integrates with the same seed.

    Returns:
        Array of shape (H+1, len(dims)) in the order of the manifold's dims
    """
    noise = path_noise(params.seed, np.asarray([path_id]), params.H, process.kind.noise_dims)
    return integrate(process, start, scale_noise(process, noise), params.v_max)[:, 0, :]


def horizontal_curve(
    process: ProcessSpec,
    start: FeaturePoint,
    controls: tuple[float, float],
    H: int,
    v_max: Optional[float] = None,
    substeps: int = 1,
) -> np.ndarray:
    """
    Deterministic integral curve obtained by replacing the noise with constants.

    Args:
        process: Process spec (only its kind matters)
        start: Start state
        controls: Constant (θ̇, v̇) per unit step
        H: Number of unit steps
        v_max: Upper reflecting wall of the velocity fiber
        substeps: Integration substeps per unit step (1 matches the kernel paths)

    Returns:
        Array of shape (H+1, len(dims)); with ``substeps > 1`` only the states at
        integer steps are returned
    """
    v_max = settings.v_max if v_max is None else v_max
    theta_rate, v_rate = controls
    dims = process.manifold.dims
    state = PathState(process, start, 1)
    out = np.empty((H + 1, len(dims)), dtype=float)
    out[0] = state.stack(dims)[0]
    for h in range(H):
        for _ in range(substeps):
            dx, dy = _drift_arrays(state.kind, state.theta, state.v)
            state.x = state.x + dx / substeps
            state.y = state.y + dy / substeps
            if state.t is not None:
                state.t = state.t + 1.0 / substeps
            state.theta = np.mod(state.theta + theta_rate / substeps, TWO_PI)
            if state.v is not None:
                state.v = reflect_velocity(state.v + v_rate / substeps, v_max)
        out[h + 1] = state.stack(dims)[0]
    return out


def canonical_base(kind: ProcessKind, v: float = 0.0) -> FeaturePoint:
    """Canonical start state: spatial origin, θ₀ = 0, t₀ = 0, velocity ``v``."""
    if kind is ProcessKind.SE2:
        return FeaturePoint(x=0.0, y=0.0, theta=0.0)
    if kind is ProcessKind.CONTOUR:
        return FeaturePoint(x=0.0, y=0.0, theta=0.0, v=v)
    return FeaturePoint(x=0.0, y=0.0, theta=0.0, t=0.0, v=v)


__all__ = [
    "ProcessKind",
    "ProcessSpec",
    "drift",
    "reflect_velocity",
    "path_noise",
    "integrate",
    "scale_noise",
    "simulate_path",
    "horizontal_curve",
    "canonical_base",
]
