"""Scoring of groupings against ground truth and parameter sweeps."""
from .scoring import ErrorBreakdown, match_units, score
from .sweep import (
    SWEEP_AXES,
    PipelineConfig,
    SweepGrid,
    SweepResult,
    SweepRunner,
    build_stimulus,
    grouping_for_cell,
    summarize,
    sweep,
)

__all__ = [
    "ErrorBreakdown",
    "match_units",
    "score",
    "SWEEP_AXES",
    "PipelineConfig",
    "SweepGrid",
    "SweepResult",
    "SweepRunner",
    "build_stimulus",
    "grouping_for_cell",
    "summarize",
    "sweep",
]
