"""Run configurations of the command-line subcommands."""
from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

from evaluation import PipelineConfig, SweepGrid
from kernels import ProcessKind
from services import GroupingConfig
from stimuli import GENERATORS


class RunConfig(BaseModel):
    """Fields shared by every subcommand."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    command: str
    seed: int = 0
    jobs: int = Field(default=1, ge=1)
    out: str


class KernelRunConfig(RunConfig):
    command: Literal["kernel"] = "kernel"
    process: ProcessKind = ProcessKind.SE2
    kappa: float = Field(default=0.014, ge=0)
    alpha: float = Field(default=0.0, ge=0)
    H: int = Field(default=40, ge=1)
    N: Optional[int] = Field(default=None, ge=1)
    v_max: Optional[float] = Field(default=None, gt=0)
    n_theta: Optional[int] = Field(default=None, ge=4)
    marginal: Optional[Literal["xy", "xyt", "xytheta"]] = None
    cache_dir: Optional[str] = None


class GenerateRunConfig(RunConfig):
    command: Literal["generate"] = "generate"
    generator: str = "sk_r"
    params: dict[str, Any] = Field(default_factory=dict)
    velocity_V: Optional[float] = Field(default=None, ge=0)

    @field_validator("generator")
    @classmethod
    def _known_generator(cls, name: str) -> str:
        if name not in GENERATORS:
            raise ValueError(f"unknown generator '{name}', expected one of {sorted(GENERATORS)}")
        return name


class ClusterRunConfig(RunConfig):
    command: Literal["cluster"] = "cluster"
    dataset: str
    dataset_hash: Optional[str] = None
    grouping: GroupingConfig = GroupingConfig()
    auto_kernel: bool = True
    cache_dir: Optional[str] = None


class SweepRunConfig(RunConfig):
    command: Literal["sweep"] = "sweep"
    grid: SweepGrid
    pipeline: PipelineConfig = PipelineConfig()
    auto_kernel: bool = True
    cache_dir: Optional[str] = None


class ScoreRunConfig(RunConfig):
    command: Literal["score"] = "score"
    dataset: str
    labels: str
    dataset_hash: Optional[str] = None


RUN_CONFIGS: dict[str, type[RunConfig]] = {
    "kernel": KernelRunConfig,
    "generate": GenerateRunConfig,
    "cluster": ClusterRunConfig,
    "sweep": SweepRunConfig,
    "score": ScoreRunConfig,
}


def merge_overrides(base: dict, overrides: dict) -> dict:
    """Recursive dict merge; values from ``overrides`` win."""
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge_overrides(merged[key], value)
        else:
            merged[key] = value
    return merged
