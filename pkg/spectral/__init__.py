"""Spectral clustering of normalized affinities, symmetric and directed."""
from .eigen import EigenSystem, canonical_basis, eigendecompose
from .clustering import (
    ClusterLabels,
    ClusterParams,
    SpectrumMode,
    apply_min_size,
    cluster,
    precluster,
    select_q,
)

__all__ = [
    "EigenSystem",
    "canonical_basis",
    "eigendecompose",
    "ClusterLabels",
    "ClusterParams",
    "SpectrumMode",
    "apply_min_size",
    "cluster",
    "precluster",
    "select_q",
]
