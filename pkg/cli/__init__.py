"""Batch command-line interface."""
from .config import (
    ClusterRunConfig,
    GenerateRunConfig,
    KernelRunConfig,
    RunConfig,
    ScoreRunConfig,
    SweepRunConfig,
)
from .main import build_parser, config_from_args, main

__all__ = [
    "ClusterRunConfig",
    "GenerateRunConfig",
    "KernelRunConfig",
    "RunConfig",
    "ScoreRunConfig",
    "SweepRunConfig",
    "build_parser",
    "config_from_args",
    "main",
]
