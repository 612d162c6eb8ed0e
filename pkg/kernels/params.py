"""Kernel estimation parameters."""
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from config.settings import settings
from features import GridSpec, Manifold


class KernelParams(BaseModel):
    """Evolution scale H, path count N, unit step and RNG seed over a covering grid."""

    model_config = ConfigDict(frozen=True)

    H: int = Field(ge=1)
    N: int = Field(ge=1)
    ds: Literal[1] = 1
    seed: int = 0
    grid: GridSpec

    @model_validator(mode="after")
    def _grid_has_time_span(self) -> "KernelParams":
        if self.grid.t is not None and self.grid.t.hi < self.H * self.grid.dt:
            raise ValueError("time extent of the grid is shorter than H")
        return self

    @property
    def v_max(self) -> float:
        return self.grid.v_max if self.grid.v_max is not None else settings.v_max

    @classmethod
    def build(
        cls,
        manifold: Manifold,
        H: int,
        N: Optional[int] = None,
        seed: int = 0,
        v_max: Optional[float] = None,
        **widths,
    ) -> "KernelParams":
        """Parameters with a default kernel grid sized to the advection reach."""
        return cls(
            H=H,
            N=N or settings.kernel_paths,
            seed=seed,
            grid=GridSpec.for_kernel(manifold, H, v_max=v_max, **widths),
        )

    def header(self) -> dict:
        return {
            "H": self.H,
            "N": self.N,
            "ds": self.ds,
            "seed": self.seed,
            "grid": self.grid.model_dump(mode="json"),
        }
