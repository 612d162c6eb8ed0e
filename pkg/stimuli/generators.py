"""Seeded generators for the synthetic grouping stimuli."""
import inspect
import math
from typing import Callable, Optional, Sequence

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, model_validator

from config.errors import ConfigError, DomainError
from config.hashing import derive_seed
from config.settings import settings
from features import GridSpec, Manifold, TWO_PI, check_compatibility, wrap_angle
from .dataset import LabeledDataset

MAX_RETRIES = 100


def stimulus_rng(seed: int, name: str) -> np.random.Generator:
    """Independent Philox stream for one generator call."""
    return np.random.Generator(np.random.Philox(key=derive_seed(seed, "stimulus", name)))


class ArcSpec(BaseModel):
    """
    Circle arc of curvature ``k`` and length ``L`` sampled at ``samples`` points.

    ``(x, y)`` is the arc midpoint and ``heading`` the feature angle θ there;
    the contour runs along (−sin θ, cos θ) and θ grows by k per unit length.
    """

    model_config = ConfigDict(frozen=True)

    k: float
    L: float = Field(gt=0)
    x: float
    y: float
    heading: float = 0.0
    samples: int = Field(default=20, ge=2)

    @model_validator(mode="after")
    def _no_self_overlap(self) -> "ArcSpec":
        if abs(self.k) * self.L >= TWO_PI:
            raise ValueError(f"arc with k={self.k}, L={self.L} overlaps itself")
        return self

    def sample(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Return (x, y, theta, arc position φ ∈ [0, L])."""
        phi = np.linspace(0.0, self.L, self.samples)
        s = phi - self.L / 2
        theta = self.heading + self.k * s
        if self.k == 0:
            x = self.x - s * math.sin(self.heading)
            y = self.y + s * math.cos(self.heading)
        else:
            x = self.x + (np.cos(theta) - math.cos(self.heading)) / self.k
            y = self.y + (np.sin(theta) - math.sin(self.heading)) / self.k
        return x, y, wrap_angle(theta), phi


def _meta(generator: str, seed: int, domain: float, dropped: int = 0, **params) -> dict:
    """Generator name, seed, domain and the exact call arguments."""
    return {"generator": generator, "seed": seed, "domain": domain, "dropped_background": dropped, "params": params}


def _inside(x: np.ndarray, y: np.ndarray, domain: float) -> bool:
    return bool(np.all((x >= 0) & (x < domain) & (y >= 0) & (y < domain)))


class _CellLedger:
    """Occupied cells of a dataset grid, for collision resampling."""

    def __init__(self, grid: GridSpec):
        self.grid = grid
        self.occupied: set[int] = set()

    def ids(self, coords: np.ndarray) -> Optional[np.ndarray]:
        cells, inside = self.grid.quantize_array(coords)
        if not np.all(inside):
            return None
        return self.grid.ravel(cells)

    def claim_all(self, coords: np.ndarray) -> None:
        check_compatibility(coords, self.grid)
        self.occupied.update(int(i) for i in self.ids(coords))

    def try_claim(self, coords: np.ndarray) -> bool:
        ids = self.ids(coords)
        if ids is None or np.unique(ids).size != ids.size or any(int(i) in self.occupied for i in ids):
            return False
        self.occupied.update(int(i) for i in ids)
        return True


def _scatter_background(
    ledger: _CellLedger, r: int, domain: float, rng: np.random.Generator
) -> tuple[np.ndarray, int]:
    """
    Place ``r`` uniform random segments in free cells.

    A segment landing in an occupied cell is redrawn up to 100 times, then dropped.

    Returns:
        Tuple of (poses of shape (kept, 3) as x, y, theta; number dropped)
    """
    background, dropped = [], 0
    for _ in range(r):
        for _attempt in range(MAX_RETRIES):
            pose = np.array([rng.uniform(0.0, domain), rng.uniform(0.0, domain), rng.uniform(0.0, TWO_PI)])
            if ledger.try_claim(pose[None, :]):
                background.append(pose)
                break
        else:
            dropped += 1
    if dropped:
        logger.warning(f"Dropped {dropped} background segment(s) after {MAX_RETRIES} collisions each")
    return np.asarray(background).reshape(-1, 3), dropped


def gen_gaussian_clouds(
    counts: Sequence[int] = (30, 30, 30),
    centers: Optional[Sequence[tuple[float, float]]] = None,
    spread: float = 8.0,
    n_noise: int = 60,
    domain: float = 200.0,
    seed: int = 0,
) -> LabeledDataset:
    """
    Gaussian clouds of 2D points (labels 1..C) over uniform noise (label 0).

    Returns:
        Position-only dataset: cloud points first, then noise
    """
    centers = list(centers) if centers is not None else [(60.0, 60.0), (140.0, 60.0), (100.0, 140.0)]
    if len(centers) != len(counts):
        raise DomainError(f"{len(counts)} cloud sizes for {len(centers)} centers")
    rng = stimulus_rng(seed, "gaussian_clouds")
    xs, ys, truth = [], [], []
    for label, (count, (cx, cy)) in enumerate(zip(counts, centers), start=1):
        xy = rng.normal(loc=(cx, cy), scale=spread, size=(count, 2))
        xs.append(xy[:, 0])
        ys.append(xy[:, 1])
        truth.append(np.full(count, label))
    noise = rng.uniform(0.0, domain, size=(n_noise, 2))
    xs.append(noise[:, 0])
    ys.append(noise[:, 1])
    truth.append(np.zeros(n_noise, dtype=int))
    return LabeledDataset(
        x=np.concatenate(xs),
        y=np.concatenate(ys),
        truth=np.concatenate(truth).astype(np.int64),
        meta=_meta(
            "gaussian_clouds",
            seed,
            domain,
            counts=list(counts),
            centers=[list(c) for c in centers],
            spread=spread,
            n_noise=n_noise,
        ),
    )


def gen_segment_field(
    units: Sequence[ArcSpec],
    r: int,
    domain: float = 200.0,
    seed: int = 0,
    generator: str = "segment_field",
) -> LabeledDataset:
    """
    Arc units of oriented segments embedded among ``r`` random segments on M3.

    Background segments falling into an occupied grid cell are resampled up to
    100 times, then dropped; the drop count is recorded in ``meta``.

    Raises:
        DomainError: if a unit leaves the domain
        GridCompatibilityError: if two unit points share a grid cell
    """
    grid = GridSpec.for_dataset(Manifold.M3, domain=domain)
    ledger = _CellLedger(grid)
    units = [u if isinstance(u, ArcSpec) else ArcSpec(**u) for u in units]
    xs, ys, thetas, phis, lengths, truth = [], [], [], [], [], []
    for label, arc in enumerate(units, start=1):
        x, y, theta, phi = arc.sample()
        if not _inside(x, y, domain):
            raise DomainError(f"unit {label} leaves the {domain}x{domain} domain")
        xs.append(x)
        ys.append(y)
        thetas.append(theta)
        phis.append(phi)
        lengths.append(np.full(arc.samples, arc.L))
        truth.append(np.full(arc.samples, label))
    if units:
        ledger.claim_all(np.stack([np.concatenate(xs), np.concatenate(ys), np.concatenate(thetas)], axis=1))

    bg, dropped = _scatter_background(ledger, r, domain, stimulus_rng(seed, generator))
    n_bg = bg.shape[0]
    return LabeledDataset(
        x=np.concatenate([*xs, bg[:, 0]]),
        y=np.concatenate([*ys, bg[:, 1]]),
        theta=np.concatenate([*thetas, bg[:, 2]]),
        truth=np.concatenate([*truth, np.zeros(n_bg, dtype=int)]).astype(np.int64),
        arc_position=np.concatenate([*phis, np.full(n_bg, np.nan)]),
        arc_length=np.concatenate([*lengths, np.full(n_bg, np.nan)]),
        meta=_meta(
            generator,
            seed,
            domain,
            units=[u.model_dump() for u in units],
            r=r,
            dropped=dropped,
        ),
    )


def sk_r_units(k: float, samples: int = 20, spacing: float = 3.0, domain: float = 200.0) -> list[ArcSpec]:
    """Two arcs of curvature ``k`` facing away from each other across the domain."""
    L = spacing * (samples - 1)
    return [
        ArcSpec(k=k, L=L, x=0.325 * domain, y=0.5 * domain, heading=0.0, samples=samples),
        ArcSpec(k=k, L=L, x=0.675 * domain, y=0.5 * domain, heading=math.pi, samples=samples),
    ]


def gen_sk_r(
    k: float = 0.056,
    r: int = 120,
    seed: int = 0,
    samples: int = 20,
    spacing: float = 3.0,
    domain: float = 200.0,
) -> LabeledDataset:
    """Two arc units of curvature ``k`` among ``r`` random segments."""
    ds = gen_segment_field(sk_r_units(k, samples, spacing, domain), r, domain=domain, seed=seed, generator="sk_r")
    meta = {**ds.meta, "params": {"k": k, "r": r, "samples": samples, "spacing": spacing}}
    return ds.with_columns(meta=meta)


def gen_lemniscate(
    scale: float = 60.0,
    samples: int = 100,
    r: int = 80,
    domain: float = 200.0,
    seed: int = 0,
) -> LabeledDataset:
    """
    Lemniscate of Bernoulli sampled with tangent orientations, plus ``r`` random segments.

    Samples sit at half-step parameter offsets so none lies on the crossing;
    the two passes through the crossing differ in θ by a right angle.
    """
    u = TWO_PI * (np.arange(samples) + 0.5) / samples
    denom = 1.0 + np.sin(u) ** 2
    cx = cy = domain / 2
    x = cx + scale * np.cos(u) / denom
    y = cy + scale * np.sin(u) * np.cos(u) / denom
    # tangent by the derivative of the parametrization
    dx = -scale * np.sin(u) * (1.0 + np.sin(u) ** 2 + 2.0 * np.cos(u) ** 2) / denom**2
    dy = scale * (np.cos(2 * u) * denom - np.sin(u) * np.cos(u) * 2.0 * np.sin(u) * np.cos(u)) / denom**2
    theta = wrap_angle(np.arctan2(dy, dx) - math.pi / 2)
    step = np.hypot(np.diff(x, append=x[0]), np.diff(y, append=y[0]))
    phi = np.concatenate([[0.0], np.cumsum(step[:-1])])
    length = float(step.sum())

    grid = GridSpec.for_dataset(Manifold.M3, domain=domain)
    ledger = _CellLedger(grid)
    if not _inside(x, y, domain):
        raise DomainError("lemniscate leaves the domain")
    ledger.claim_all(np.stack([x, y, theta], axis=1))
    bg, dropped = _scatter_background(ledger, r, domain, stimulus_rng(seed, "lemniscate"))
    n_bg = bg.shape[0]
    return LabeledDataset(
        x=np.concatenate([x, bg[:, 0]]),
        y=np.concatenate([y, bg[:, 1]]),
        theta=np.concatenate([theta, bg[:, 2]]),
        truth=np.concatenate([np.ones(samples, dtype=int), np.zeros(n_bg, dtype=int)]).astype(np.int64),
        arc_position=np.concatenate([phi, np.full(n_bg, np.nan)]),
        arc_length=np.concatenate([np.full(samples, length), np.full(n_bg, np.nan)]),
        meta=_meta("lemniscate", seed, domain, dropped, scale=scale, samples=samples, r=r),
    )


def assign_velocity_sinusoidal(ds: LabeledDataset, V: float = 5.0, seed: int = 0) -> LabeledDataset:
    """
    Lift an M3 dataset to M0 with v(φ) = V·sin(πφ/L) along each unit.

    Background points get v ~ Uniform[0, V].
    """
    if ds.manifold is not Manifold.M3:
        raise DomainError("sinusoidal velocities are assigned to M3 datasets")
    unit = ds.truth > 0
    if np.any(unit) and (ds.arc_position is None or np.any(np.isnan(ds.arc_position[unit]))):
        raise DomainError("unit points need an arc parametrization")
    rng = stimulus_rng(seed, "sinusoidal_velocity")
    v = rng.uniform(0.0, V, size=ds.n)
    if np.any(unit):
        v[unit] = np.abs(V * np.sin(math.pi * ds.arc_position[unit] / ds.arc_length[unit]))
    meta = {**ds.meta, "velocity": {"V": V, "seed": seed}}
    return ds.with_columns(v=v, meta=meta)


def gen_moving_scene(
    r: int,
    seed: int = 0,
    n_frames: int = 32,
    domain: float = 400.0,
    circle_points: int = 32,
    bar_points: int = 12,
    circle_curvature: float = 0.02,
    circle_speed: float = 7.5,
    bar_speed: float = 3.75,
    bar_spacing: float = 3.0,
    v_max: Optional[float] = None,
) -> LabeledDataset:
    """
    Circle (label 1) and two vertical bars (labels 2, 3) moving in opposite
    directions over ``n_frames`` frames among ``r`` moving random segments, on MT.

    Each point's v is the projection of its true velocity on the contour normal
    (cos θ, sin θ); θ is flipped by π where that projection is negative. The
    circle moves along +x and the bars along −x. Background segments keep a
    constant random normal speed in [0, v_max] for the whole sequence.
    """
    v_max = settings.v_max if v_max is None else v_max
    frames = np.arange(n_frames, dtype=float)

    # unit shapes at frame 0 with their true velocity
    radius = 1.0 / circle_curvature
    phi = TWO_PI * (np.arange(circle_points) + 0.5) / circle_points
    bar_offsets = bar_spacing * (np.arange(bar_points) - (bar_points - 1) / 2)
    bar_x = 0.8 * domain
    shapes = [
        (0.225 * domain + radius * np.cos(phi), 0.5 * domain + radius * np.sin(phi), phi, circle_speed, radius * phi, TWO_PI * radius),
        (np.full(bar_points, bar_x), 0.8 * domain + bar_offsets, np.zeros(bar_points), -bar_speed, bar_offsets - bar_offsets[0], bar_offsets[-1] - bar_offsets[0]),
        (np.full(bar_points, bar_x), 0.2 * domain + bar_offsets, np.zeros(bar_points), -bar_speed, bar_offsets - bar_offsets[0], bar_offsets[-1] - bar_offsets[0]),
    ]

    grid = GridSpec.for_dataset(Manifold.MT, domain=domain, v_max=v_max, n_frames=n_frames)
    ledger = _CellLedger(grid)
    rows = []  # (frame, x, y, theta, v, truth, arc_position, arc_length)
    for label, (x0, y0, theta0, speed, arc_pos, arc_len) in enumerate(shapes, start=1):
        projection = speed * np.cos(theta0)
        theta = wrap_angle(np.where(projection < 0, theta0 + math.pi, theta0))
        v = np.abs(projection)
        for f in frames:
            x = x0 + speed * f
            if not _inside(x, y0, domain):
                raise DomainError(f"unit {label} leaves the domain by frame {int(f)}")
            rows.append(np.stack([np.full(x.size, f), x, y0, theta, v, np.full(x.size, label), arc_pos, np.full(x.size, arc_len)], axis=1))
    units = np.concatenate(rows)
    ledger.claim_all(units[:, [1, 2, 0, 3, 4]])

    rng = stimulus_rng(seed, "moving_scene")
    background, dropped = [], 0
    for _ in range(r):
        for _attempt in range(MAX_RETRIES):
            theta = rng.uniform(0.0, TWO_PI)
            v = rng.uniform(0.0, v_max)
            dx, dy = v * math.cos(theta), v * math.sin(theta)
            span_x, span_y = dx * (n_frames - 1), dy * (n_frames - 1)
            lo_x, hi_x = max(0.0, -span_x), min(domain, domain - span_x)
            lo_y, hi_y = max(0.0, -span_y), min(domain, domain - span_y)
            if hi_x <= lo_x or hi_y <= lo_y:
                continue
            x = rng.uniform(lo_x, hi_x) + dx * frames
            y = rng.uniform(lo_y, hi_y) + dy * frames
            track = np.stack([x, y, frames, np.full(n_frames, theta), np.full(n_frames, v)], axis=1)
            if ledger.try_claim(track):
                background.append(track)
                break
        else:
            dropped += 1
    if dropped:
        logger.warning(f"Dropped {dropped} moving background segment(s)")

    bg = np.concatenate(background) if background else np.empty((0, 5))
    n_bg = bg.shape[0]
    # frame-major order: units then background within each frame
    t = np.concatenate([units[:, 0], bg[:, 2]])
    order = np.argsort(t, kind="stable")
    return LabeledDataset(
        x=np.concatenate([units[:, 1], bg[:, 0]]),
        y=np.concatenate([units[:, 2], bg[:, 1]]),
        t=t,
        theta=np.concatenate([units[:, 3], bg[:, 3]]),
        v=np.concatenate([units[:, 4], bg[:, 4]]),
        truth=np.concatenate([units[:, 5], np.zeros(n_bg)]).astype(np.int64),
        arc_position=np.concatenate([units[:, 6], np.full(n_bg, np.nan)]),
        arc_length=np.concatenate([units[:, 7], np.full(n_bg, np.nan)]),
        meta=_meta(
            "moving_scene",
            seed,
            domain,
            r=r,
            n_frames=n_frames,
            circle_points=circle_points,
            bar_points=bar_points,
            circle_curvature=circle_curvature,
            circle_speed=circle_speed,
            bar_speed=bar_speed,
            bar_spacing=bar_spacing,
            v_max=v_max,
            dropped=dropped,
        ),
    ).take(order)


GENERATORS: dict[str, Callable[..., LabeledDataset]] = {
    "gaussian_clouds": gen_gaussian_clouds,
    "segment_field": gen_segment_field,
    "sk_r": gen_sk_r,
    "lemniscate": gen_lemniscate,
    "moving_scene": gen_moving_scene,
}


def generate(name: str, seed: int = 0, **params) -> LabeledDataset:
    """Run a generator by name; ``velocity_V`` lifts an M3 result to M0."""
    V = params.pop("velocity_V", None)
    try:
        factory = GENERATORS[name]
    except KeyError:
        raise DomainError(f"unknown generator '{name}', expected one of {sorted(GENERATORS)}") from None
    try:
        inspect.signature(factory).bind(seed=seed, **params)
    except TypeError as e:
        raise ConfigError(f"bad parameters for generator '{name}': {e}") from None
    ds = factory(seed=seed, **params)
    if V is not None:
        ds = assign_velocity_sinusoidal(ds, V=V, seed=seed)
    return ds


def regenerate(meta: dict) -> LabeledDataset:
    """Rebuild a dataset from its ``meta`` record."""
    ds = generate(meta["generator"], seed=meta["seed"], domain=meta["domain"], **meta["params"])
    velocity = meta.get("velocity")
    if velocity is not None:
        ds = assign_velocity_sinusoidal(ds, V=velocity["V"], seed=velocity["seed"])
    return ds
