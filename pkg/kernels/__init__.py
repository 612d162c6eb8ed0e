"""Connectivity kernels: stochastic processes, Monte Carlo estimation, lookup and caching."""
from .params import KernelParams
from .processes import (
    ProcessKind,
    ProcessSpec,
    canonical_base,
    drift,
    horizontal_curve,
    reflect_velocity,
    simulate_path,
)
from .estimator import (
    DiscreteKernel,
    KernelEstimator,
    KernelSlice,
    estimate_kernel,
    kernel_lookup,
    kernel_lookup_many,
    marginal,
    pairwise_weights,
    spatial_second_moment,
    velocity_bins,
)
from .cache import KernelCache, cache_key, export_json, kernel_header

__all__ = [
    "KernelParams",
    "ProcessKind",
    "ProcessSpec",
    "canonical_base",
    "drift",
    "horizontal_curve",
    "reflect_velocity",
    "simulate_path",
    "DiscreteKernel",
    "KernelEstimator",
    "KernelSlice",
    "estimate_kernel",
    "kernel_lookup",
    "kernel_lookup_many",
    "marginal",
    "pairwise_weights",
    "spatial_second_moment",
    "velocity_bins",
    "KernelCache",
    "cache_key",
    "export_json",
    "kernel_header",
]
