"""Synthetic stimuli with ground truth: datasets, IO and seeded generators."""
from .dataset import LabeledDataset
from .generators import (
    GENERATORS,
    ArcSpec,
    assign_velocity_sinusoidal,
    gen_gaussian_clouds,
    gen_lemniscate,
    gen_moving_scene,
    gen_segment_field,
    gen_sk_r,
    generate,
    regenerate,
    sk_r_units,
)

__all__ = [
    "LabeledDataset",
    "GENERATORS",
    "ArcSpec",
    "assign_velocity_sinusoidal",
    "gen_gaussian_clouds",
    "gen_lemniscate",
    "gen_moving_scene",
    "gen_segment_field",
    "gen_sk_r",
    "generate",
    "regenerate",
    "sk_r_units",
]
