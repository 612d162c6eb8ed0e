"""Monte Carlo estimation of discrete connectivity kernels and their lookup."""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd
from loguru import logger

from config.errors import DomainError, KernelEstimationError
from config.settings import settings
from features import FeaturePoint, GridSpec
from features.space import TWO_PI
from .params import KernelParams
from .processes import ProcessKind, ProcessSpec, canonical_base, integrate, path_noise, scale_noise


@dataclass(frozen=True)
class KernelSlice:
    """
    Tabulated kernel for one canonical base state.

    Weights are stored sparsely as sorted linear cell ids of the kernel grid.
    """

    base: FeaturePoint
    ids: np.ndarray
    weights: np.ndarray
    spilled: int = 0

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def weight_of(self, ids: np.ndarray) -> np.ndarray:
        """Weights for linear cell ids (0 outside the support)."""
        ids = np.asarray(ids, dtype=np.int64)
        if self.ids.size == 0:
            return np.zeros(ids.shape, dtype=float)
        pos = np.searchsorted(self.ids, ids)
        pos = np.minimum(pos, self.ids.size - 1)
        return np.where(self.ids[pos] == ids, self.weights[pos], 0.0)


@dataclass(frozen=True)
class DiscreteKernel:
    """
    Binned Monte Carlo estimate Γ̂^H of a connectivity kernel.

    Kernels with a velocity fiber hold one slice per base-velocity bin; SE2
    kernels hold a single slice keyed 0.
    """

    process: ProcessSpec
    params: KernelParams
    slices: dict[int, KernelSlice] = field(default_factory=dict)

    @property
    def grid(self) -> GridSpec:
        return self.params.grid

    @property
    def manifold(self):
        return self.process.manifold

    def slice_for(self, v: Optional[float]) -> KernelSlice:
        """Slice whose base velocity bin contains ``v`` (the only slice for SE2)."""
        if self.process.kind is ProcessKind.SE2:
            return self.slices[0]
        return self.slices[self.base_bin(v)]

    def base_bin(self, v: Optional[float]) -> int:
        if v is None or not (0.0 <= v <= self.params.v_max):
            raise DomainError(f"source velocity {v} outside [0, {self.params.v_max}]")
        b = int(np.floor((v - self.grid.v.lo) / self.grid.dv))
        if b not in self.slices:
            raise DomainError(f"no kernel slice tabulated for base velocity bin {b}")
        return b

    def weights(self, v_bin: int = 0) -> dict[tuple[int, ...], float]:
        """Sparse map cell index -> weight for one slice."""
        sl = self.slices[v_bin]
        cells = self.grid.unravel(sl.ids)
        return {tuple(int(i) for i in c): float(w) for c, w in zip(cells, sl.weights)}

    def header(self) -> dict:
        return {
            "process": self.process.header(),
            "params": self.params.header(),
            "base_bins": sorted(self.slices),
        }


def velocity_bins(grid: GridSpec) -> list[int]:
    if grid.v is None:
        return [0]
    return list(range(grid.shape[grid.dims.index("v")]))


def _bin_states(grid: GridSpec, states: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    """Quantize (H+1, n, d) states; returns (unique ids, counts, out-of-grid count)."""
    flat = states.reshape(-1, states.shape[-1])
    cells, inside = grid.quantize_array(flat)
    ids = grid.ravel(cells[inside])
    uniq, counts = np.unique(ids, return_counts=True)
    return uniq, counts.astype(np.int64), int((~inside).sum())


class KernelEstimator:
    """
    Simulates N discrete paths per base state and accumulates visit counts.

    Paths are split in fixed-size shards (``settings.path_block``); shards run on
    a thread pool and their integer counts are merged in shard order, so the
    result is bit-identical for any worker count.
    """

    def __init__(self, jobs: Optional[int] = None, spill_tolerance: Optional[float] = None):
        self.logger = logger.bind(name=self.__class__.__name__)
        self.jobs = jobs or settings.jobs
        self.spill_tolerance = settings.spill_tolerance if spill_tolerance is None else spill_tolerance

    def _run_shard(
        self,
        process: ProcessSpec,
        params: KernelParams,
        bases: dict[int, FeaturePoint],
        path_ids: np.ndarray,
    ) -> dict[int, tuple[np.ndarray, np.ndarray, int]]:
        noise = scale_noise(process, path_noise(params.seed, path_ids, params.H, process.kind.noise_dims))
        out = {}
        for b, base in bases.items():
            states = integrate(process, base, noise, params.v_max)
            out[b] = _bin_states(params.grid, states)
        return out

    def estimate(
        self,
        process: ProcessSpec,
        params: KernelParams,
        base_v_bin: Optional[int] = None,
    ) -> DiscreteKernel:
        if params.grid.manifold is not process.manifold:
            raise DomainError(f"{process.kind.value} kernel needs a {process.manifold.value} grid")
        if process.kind is ProcessKind.SE2:
            bins = [0]
        elif base_v_bin is None:
            bins = velocity_bins(params.grid)
        else:
            if base_v_bin not in velocity_bins(params.grid):
                raise DomainError(f"base velocity bin {base_v_bin} outside the grid")
            bins = [base_v_bin]
        bases = {b: canonical_base(process.kind, b * params.grid.dv) for b in bins}

        self.logger.info(
            f"Estimating {process.kind.value} kernel (kappa={process.kappa}, alpha={process.alpha}, "
            f"H={params.H}, N={params.N}, slices={len(bins)})"
        )
        block = max(1, settings.path_block)
        shards = [np.arange(a, min(a + block, params.N)) for a in range(0, params.N, block)]
        try:
            with ThreadPoolExecutor(max_workers=self.jobs) as pool:
                results = list(pool.map(lambda ids: self._run_shard(process, params, bases, ids), shards))
        except Exception as e:
            self.logger.error(f"Kernel simulation failed: {e}")
            raise

        scale = 1.0 / (params.N * params.H)
        slices = {}
        for b in bins:
            parts = [(r[b][0], r[b][1]) for r in results]
            spilled = sum(r[b][2] for r in results)
            fraction = spilled / (params.N * (params.H + 1))
            if fraction > self.spill_tolerance:
                raise KernelEstimationError(
                    f"{spilled} path states ({fraction:.2%}) left the kernel grid for base bin {b}"
                )
            if spilled:
                self.logger.warning(f"{spilled} path states dropped outside the grid (base bin {b})")
            ids, counts = merge_counts(parts)
            slices[b] = KernelSlice(base=bases[b], ids=ids, weights=counts * scale, spilled=spilled)
        kernel = DiscreteKernel(process=process, params=params, slices=slices)
        self.logger.info(f"Kernel estimated: {sum(s.ids.size for s in slices.values())} nonzero cells")
        return kernel


def merge_counts(parts: list[tuple[np.ndarray, np.ndarray]]) -> tuple[np.ndarray, np.ndarray]:
    """Sum sparse integer counts keyed by cell id; output sorted by id."""
    if not parts:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    ids = np.concatenate([p[0] for p in parts])
    counts = np.concatenate([p[1] for p in parts])
    uniq, inverse = np.unique(ids, return_inverse=True)
    summed = np.zeros(uniq.size, dtype=np.int64)
    np.add.at(summed, inverse, counts)
    return uniq, summed


def estimate_kernel(
    process: ProcessSpec,
    params: KernelParams,
    base_v_bin: Optional[int] = None,
    jobs: Optional[int] = None,
) -> DiscreteKernel:
    """
    Estimate Γ̂^H(Ω_j | γ₀) = (1/H) Σ_{h=0..H} (paths in Ω_j at step h) / N.

    Args:
        process: Process to simulate
        params: H, N, seed and kernel grid
        base_v_bin: Velocity bin of the canonical start; None tabulates every bin
        jobs: Worker threads (results do not depend on it)

    Raises:
        KernelEstimationError: if paths leave the grid beyond the spill tolerance
    """
    return KernelEstimator(jobs=jobs).estimate(process, params, base_v_bin)


# ----------------------------------------------------------------------
# Lookup
# ----------------------------------------------------------------------
def relative_coords(
    kernel: DiscreteKernel,
    src: dict[str, np.ndarray],
    dst: dict[str, np.ndarray],
    theta_shift: float = 0.0,
) -> np.ndarray:
    """
    Image of ``dst`` under the rigid motion taking ``src`` to the canonical base.

    Positions (and times) are translated by the source, rotated by −θ_src, and
    angles shifted by −θ_src; velocity stays absolute. Arrays broadcast.
    """
    c = np.cos(src["theta"])
    s = np.sin(src["theta"])
    dx = dst["x"] - src["x"]
    dy = dst["y"] - src["y"]
    rel = {
        "x": c * dx + s * dy,
        "y": -s * dx + c * dy,
        "theta": np.mod(dst["theta"] + theta_shift - src["theta"], TWO_PI),
    }
    if "t" in kernel.grid.dims:
        rel["t"] = dst["t"] - src["t"]
    if "v" in kernel.grid.dims:
        rel["v"] = dst["v"] + np.zeros_like(rel["x"])
    return np.stack([np.broadcast_to(rel[name], rel["x"].shape) for name in kernel.grid.dims], axis=-1)


def lookup_relative(kernel: DiscreteKernel, sl: KernelSlice, rel: np.ndarray) -> np.ndarray:
    shape = rel.shape[:-1]
    cells, inside = kernel.grid.quantize_array(rel.reshape(-1, rel.shape[-1]))
    weights = np.zeros(inside.shape, dtype=float)
    if inside.any():
        weights[inside] = sl.weight_of(kernel.grid.ravel(cells[inside]))
    return weights.reshape(shape)


def _point_arrays(kernel: DiscreteKernel, p: FeaturePoint) -> dict[str, np.ndarray]:
    dims = kernel.grid.dims
    return {name: np.asarray(value) for name, value in zip(dims, p.coords(dims))}


def kernel_lookup(
    kernel: DiscreteKernel,
    source: FeaturePoint,
    target: FeaturePoint,
    identify_orientation: bool = False,
) -> float:
    """
    Kernel weight Γ̂(source, target).

    With ``identify_orientation`` the kernel is folded over θ mod π:
    Γ̂(source, target) + Γ̂(source, target with θ shifted by π).

    Raises:
        DomainError: if the source velocity lies outside [0, v_max]
    """
    src = {name: value[None] for name, value in _point_arrays(kernel, source).items()}
    dst = {name: value[None] for name, value in _point_arrays(kernel, target).items()}
    return float(kernel_lookup_many(kernel, src, dst, identify_orientation)[0])


def kernel_lookup_many(
    kernel: DiscreteKernel,
    sources: dict[str, np.ndarray],
    targets: dict[str, np.ndarray],
    identify_orientation: bool = False,
) -> np.ndarray:
    """Elementwise Γ̂(sources[i], targets[i]) over paired coordinate arrays."""
    dims = kernel.grid.dims
    src = {d: np.asarray(sources[d], dtype=float) for d in dims}
    dst = {d: np.asarray(targets[d], dtype=float) for d in dims}
    if "v" in dims:
        bins = np.asarray([kernel.base_bin(float(v)) for v in src["v"]], dtype=int)
    else:
        bins = np.zeros(src["x"].shape, dtype=int)
    shifts = (0.0, np.pi) if identify_orientation else (0.0,)
    out = np.zeros(src["x"].shape, dtype=float)
    for shift in shifts:
        rel = relative_coords(kernel, src, dst, shift)
        for b in np.unique(bins):
            mask = bins == b
            out[mask] += lookup_relative(kernel, kernel.slices[int(b)], rel[mask])
    return out


def pairwise_weights(
    kernel: DiscreteKernel,
    columns: dict[str, np.ndarray],
    identify_orientation: bool = False,
    jobs: Optional[int] = None,
    row_block: int = 256,
) -> np.ndarray:
    """
    Dense matrix W with W[i, j] = Γ̂(x_i, x_j) over a dataset.

    Args:
        kernel: Estimated kernel
        columns: Per-dimension coordinate arrays (must include the kernel's dims)
        identify_orientation: Fold the kernel over θ mod π
        jobs: Worker threads over row blocks
        row_block: Rows per block
    """
    dims = kernel.grid.dims
    missing = [d for d in dims if d not in columns or columns[d] is None]
    if missing:
        raise DomainError(f"dataset lacks coordinates {missing} required by the {kernel.manifold.value} kernel")
    n = len(columns["x"])
    data = {d: np.asarray(columns[d], dtype=float) for d in dims}
    if "v" in dims:
        bins = np.asarray([kernel.base_bin(float(v)) for v in data["v"]])
    else:
        bins = np.zeros(n, dtype=int)
    out = np.zeros((n, n), dtype=float)

    def fill(start: int) -> None:
        rows = np.arange(start, min(start + row_block, n))
        src = {d: data[d][rows, None] for d in dims}
        dst = {d: data[d][None, :] for d in dims}
        shifts = (0.0, np.pi) if identify_orientation else (0.0,)
        for shift in shifts:
            rel = relative_coords(kernel, src, dst, shift)
            for b in np.unique(bins[rows]):
                mask = bins[rows] == b
                out[rows[mask]] += lookup_relative(kernel, kernel.slices[int(b)], rel[mask])

    with ThreadPoolExecutor(max_workers=jobs or settings.jobs) as pool:
        list(pool.map(fill, range(0, n, row_block)))
    return out


# ----------------------------------------------------------------------
# Diagnostics
# ----------------------------------------------------------------------
def marginal(kernel: DiscreteKernel, projection: str = "xy", v_bin: int = 0) -> pd.DataFrame:
    """
    Summed projection of one kernel slice onto ``xy``, ``xyt`` or ``xytheta``.

    Returns:
        Long-format frame with one row per nonzero projected cell (cell centers)
    """
    keep = {"xy": ("x", "y"), "xyt": ("x", "y", "t"), "xytheta": ("x", "y", "theta")}.get(projection)
    if keep is None or any(d not in kernel.grid.dims for d in keep):
        raise DomainError(f"projection '{projection}' not available for a {kernel.manifold.value} kernel")
    sl = kernel.slices[v_bin]
    cells = kernel.grid.unravel(sl.ids)
    centers = kernel.grid.center_array(cells)
    axes = [kernel.grid.dims.index(d) for d in keep]
    frame = pd.DataFrame({d: centers[:, a] for d, a in zip(keep, axes)})
    frame["weight"] = sl.weights
    return frame.groupby(list(keep), sort=True, as_index=False)["weight"].sum()


def spatial_second_moment(kernel: DiscreteKernel, v_bin: int = 0) -> float:
    """Spatial spread: trace of the xy covariance under the normalized marginal."""
    sl = kernel.slices[v_bin]
    centers = kernel.grid.center_array(kernel.grid.unravel(sl.ids))
    x = centers[:, kernel.grid.dims.index("x")]
    y = centers[:, kernel.grid.dims.index("y")]
    w = sl.weights / sl.weights.sum()
    mx, my = np.sum(w * x), np.sum(w * y)
    return float(np.sum(w * ((x - mx) ** 2 + (y - my) ** 2)))
