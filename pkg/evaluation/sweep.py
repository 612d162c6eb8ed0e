"""Seeded repetition sweeps over kernel and stimulus parameters."""
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Literal, Optional

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from config.errors import CorticalError
from config.hashing import derive_seed
from config.settings import settings
from services import GroupingConfig, GroupingService
from stimuli import LabeledDataset, assign_velocity_sinusoidal, generate
from .scoring import ErrorBreakdown, score

SWEEP_AXES = ("kappa", "H", "alpha", "k", "r")
StimulusFamily = Literal["sk_r", "sk_r_velocity", "clouds", "lemniscate", "moving_scene"]


class SweepGrid(BaseModel):
    """Named parameter axes, repetitions per cell and the base seed."""

    model_config = ConfigDict(frozen=True)

    axes: dict[str, list[float]]
    reps: int = Field(default=100, ge=1)
    base_seed: int = 0

    @field_validator("axes")
    @classmethod
    def _known_axes(cls, axes: dict[str, list[float]]) -> dict[str, list[float]]:
        unknown = sorted(set(axes) - set(SWEEP_AXES))
        if unknown:
            raise ValueError(f"unknown sweep axes {unknown}; expected a subset of {list(SWEEP_AXES)}")
        if any(len(values) == 0 for values in axes.values()):
            raise ValueError("sweep axes must be non-empty")
        return axes

    def cells(self) -> list[dict[str, float]]:
        """Cartesian product of the axes, first axis slowest."""
        names = list(self.axes)
        return [dict(zip(names, values)) for values in itertools.product(*(self.axes[n] for n in names))]


class PipelineConfig(BaseModel):
    """Stimulus family plus grouping configuration swept over."""

    model_config = ConfigDict(frozen=True)

    family: StimulusFamily = "sk_r"
    stimulus: dict[str, Any] = Field(default_factory=dict)
    grouping: GroupingConfig = GroupingConfig()
    reestimate_kernels: bool = False


def build_stimulus(config: PipelineConfig, cell: dict[str, float], seed: int) -> LabeledDataset:
    """Dataset of one repetition with the cell's ``k`` and ``r`` applied."""
    params = dict(config.stimulus)
    if "r" in cell:
        params["r"] = int(cell["r"])
    if "k" in cell:
        params["k"] = cell["k"]
    if config.family in ("sk_r", "sk_r_velocity"):
        V = params.pop("V", 5.0)
        ds = generate("sk_r", seed=seed, **params)
        if config.family == "sk_r_velocity":
            ds = assign_velocity_sinusoidal(ds, V=V, seed=seed)
        return ds
    if config.family == "clouds":
        params.pop("k", None)
        if "r" in params:
            params["n_noise"] = params.pop("r")
        return generate("gaussian_clouds", seed=seed, **params)
    params.pop("k", None)
    return generate(config.family, seed=seed, **params)


def grouping_for_cell(config: PipelineConfig, cell: dict[str, float], seed: int) -> GroupingConfig:
    overrides: dict[str, Any] = {}
    if "kappa" in cell:
        overrides["kappa"] = cell["kappa"]
    if "H" in cell:
        overrides["H"] = int(cell["H"])
    if "alpha" in cell:
        overrides["alpha0"] = cell["alpha"]
    if config.family == "sk_r_velocity" and "alpha" not in cell and "alpha0" not in config.grouping.model_fields_set:
        # velocity diffusion matched to the steepest slope of the sinusoid, πV/L
        samples = config.stimulus.get("samples", 20)
        spacing = config.stimulus.get("spacing", 3.0)
        overrides["alpha0"] = math.pi * config.stimulus.get("V", 5.0) / (spacing * (samples - 1))
    if config.reestimate_kernels:
        overrides["kernel_seed"] = derive_seed(seed, "kernel")
    return config.grouping.model_copy(update=overrides)


@dataclass(frozen=True)
class SweepResult:
    grid: SweepGrid
    config: PipelineConfig
    long: pd.DataFrame
    summary: pd.DataFrame

    def manifest(self) -> dict:
        """Grid, pipeline and every repetition seed."""
        return {
            "command": "sweep",
            "grid": self.grid.model_dump(mode="json"),
            "pipeline": self.config.model_dump(mode="json"),
            "seeds": [
                {"cell": int(c), "rep": int(r), "seed": int(s)}
                for c, r, s in zip(self.long["cell"], self.long["rep"], self.long["seed"])
            ],
        }

    def write(self, out_dir: str | Path) -> Path:
        """Write ``sweep_long.csv``, ``sweep_summary.csv`` and ``manifest.json``."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        self.long.to_csv(out_dir / "sweep_long.csv", index=False, lineterminator="\n")
        self.summary.to_csv(out_dir / "sweep_summary.csv", index=False, lineterminator="\n")
        manifest = self.manifest()
        (out_dir / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        logger.info(f"Sweep results written to {out_dir}")
        return out_dir


class SweepRunner:
    """Runs every (cell, repetition) pair on a thread pool and aggregates in grid order."""

    def __init__(self, grouping_service: Optional[GroupingService] = None, jobs: Optional[int] = None):
        self.logger = logger.bind(name=self.__class__.__name__)
        self.jobs = jobs or settings.jobs
        self.grouping_service = grouping_service or GroupingService()

    def _run_one(self, config: PipelineConfig, index: int, cell: dict[str, float], rep: int, seed: int) -> dict:
        row: dict[str, Any] = {"cell": index, **cell, "rep": rep, "seed": seed}
        try:
            dataset = build_stimulus(config, cell, seed)
            grouping = grouping_for_cell(config, cell, seed)
            result = self.grouping_service.group(dataset, grouping)
            breakdown = score(result.labels, dataset.truth)
            row.update(breakdown.model_dump(), K=result.labels.K, error="")
        except (CorticalError, ValidationError, ValueError, TypeError) as e:
            self.logger.warning(f"Repetition {rep} of cell {index} failed: {e}")
            row.update(E1=np.nan, E2=np.nan, E3=np.nan, n=np.nan, E=np.nan, K=np.nan, error=f"{type(e).__name__}: {e}")
        return row

    def run(self, grid: SweepGrid, config: PipelineConfig) -> SweepResult:
        cells = grid.cells()
        tasks = [
            (index, cell, rep, derive_seed(grid.base_seed, "sweep", index, rep))
            for index, cell in enumerate(cells)
            for rep in range(grid.reps)
        ]
        self.logger.info(f"Sweep over {len(cells)} cell(s) x {grid.reps} repetition(s) with {self.jobs} worker(s)")
        with ThreadPoolExecutor(max_workers=self.jobs) as pool:
            rows = list(pool.map(lambda task: self._run_one(config, *task), tasks))
        long = pd.DataFrame(rows)
        summary = summarize(long, cells, list(grid.axes))
        return SweepResult(grid=grid, config=config, long=long, summary=summary)


def summarize(long: pd.DataFrame, cells: list[dict[str, float]], axes: list[str]) -> pd.DataFrame:
    """Per-cell mean and sd of E plus component means, in grid order."""
    records = []
    for index, cell in enumerate(cells):
        rows = long[long["cell"] == index]
        ok = rows[rows["error"] == ""]
        E = ok["E"].to_numpy(dtype=float)
        breakdowns = [
            ErrorBreakdown(E1=r.E1, E2=r.E2, E3=r.E3, n=r.n, E=r.E) for r in ok.itertuples(index=False)
        ]
        mean = ErrorBreakdown.mean(breakdowns) if breakdowns else None
        records.append(
            {
                "cell": index,
                **cell,
                "reps": len(rows),
                "reps_ok": len(ok),
                "partial": len(ok) < len(rows),
                "mean_E": float(E.mean()) if E.size else np.nan,
                "sd_E": float(E.std(ddof=1)) if E.size > 1 else 0.0 if E.size else np.nan,
                "mean_E1": mean.E1 if mean else np.nan,
                "mean_E2": mean.E2 if mean else np.nan,
                "mean_E3": mean.E3 if mean else np.nan,
            }
        )
        logger.debug(f"Cell {index} {cell}: mean E {records[-1]['mean_E']:.4f} over {len(ok)} repetition(s)")
    return pd.DataFrame(records, columns=["cell", *axes, "reps", "reps_ok", "partial", "mean_E", "sd_E", "mean_E1", "mean_E2", "mean_E3"])


def sweep(
    grid: SweepGrid,
    config: PipelineConfig,
    grouping_service: Optional[GroupingService] = None,
    jobs: Optional[int] = None,
) -> SweepResult:
    """
    Mean grouping error per grid cell over seeded repetitions.

    Repetition seeds are derived from (base seed, cell index, repetition), so
    the result does not depend on scheduling or worker count.
    """
    return SweepRunner(grouping_service=grouping_service, jobs=jobs).run(grid, config)
