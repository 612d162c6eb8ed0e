"""Pairwise affinities over feature-space datasets and their normalization."""
from .matrix import (
    AffinityMatrix,
    NormalizedAffinity,
    combine,
    restrict_same_frame,
    row_normalize,
    spectrum_check,
)
from .builders import cortical_affinity_directed, cortical_affinity_symmetric, gaussian_affinity

__all__ = [
    "AffinityMatrix",
    "NormalizedAffinity",
    "combine",
    "restrict_same_frame",
    "row_normalize",
    "spectrum_check",
    "cortical_affinity_directed",
    "cortical_affinity_symmetric",
    "gaussian_affinity",
]
