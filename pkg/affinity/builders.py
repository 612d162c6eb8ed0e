"""Affinity construction: isotropic gaussian baseline and cortical kernels."""
from typing import Optional

import numpy as np
from loguru import logger
from scipy.spatial.distance import cdist

from config.errors import DomainError
from kernels import DiscreteKernel, pairwise_weights
from stimuli.dataset import LabeledDataset
from .matrix import AffinityMatrix


def gaussian_affinity(points: np.ndarray | LabeledDataset, sigma: float) -> AffinityMatrix:
    """
    a_ij = exp(−‖x_i − x_j‖² / (2σ²)) over 2D positions.

    Args:
        points: Array of shape (n, 2) or a dataset (its positions are used)
        sigma: Scale parameter
    """
    if sigma <= 0:
        raise DomainError(f"sigma must be > 0, got {sigma}")
    if isinstance(points, LabeledDataset):
        points = points.positions()
    points = np.asarray(points, dtype=float)
    entries = np.exp(-cdist(points, points, "sqeuclidean") / (2.0 * sigma**2))
    return AffinityMatrix(entries=entries, symmetric=True, provenance={"kind": "gaussian", "sigma": sigma})


def _checked_columns(dataset: LabeledDataset, kernel: DiscreteKernel) -> dict[str, np.ndarray]:
    """Dataset coordinates after the one-point-per-cell check on the dataset grid."""
    g = kernel.grid
    widths = {"dx": g.dx, "dy": g.dy, "dt": g.dt, "dv": g.dv, "n_theta": g.n_theta}
    if dataset.manifold is None:
        raise DomainError("cortical affinities need oriented feature points")
    dataset.check_grid(dataset.grid(v_max=kernel.params.v_max, **widths))
    return dataset.columns()


def _provenance(kind: str, dataset: LabeledDataset, kernel: DiscreteKernel, kernel_key: Optional[str]) -> dict:
    return {
        "kind": kind,
        "dataset_hash": dataset.content_hash(),
        "kernel_key": kernel_key,
        "kernel": kernel.header(),
    }


def cortical_affinity_symmetric(
    dataset: LabeledDataset,
    kernel: DiscreteKernel,
    kernel_key: Optional[str] = None,
    jobs: Optional[int] = None,
) -> AffinityMatrix:
    """
    Reciprocal cortical affinity a_ij = (Γ̃(x_i, x_j) + Γ̃(x_j, x_i))/2.

    Γ̃ is the kernel folded over θ mod π, so two segments facing each other
    along one line connect whichever way each one points.

    Raises:
        GridCompatibilityError: if two dataset points share a grid cell
    """
    columns = _checked_columns(dataset, kernel)
    W = pairwise_weights(kernel, columns, identify_orientation=True, jobs=jobs)
    entries = 0.5 * (W + W.T)
    logger.debug(f"Symmetric {kernel.manifold.value} affinity: {np.count_nonzero(entries)} nonzero entries")
    return AffinityMatrix(
        entries=entries,
        symmetric=True,
        provenance=_provenance("cortical_symmetric", dataset, kernel, kernel_key),
    )


def cortical_affinity_directed(
    dataset: LabeledDataset,
    kernel: DiscreteKernel,
    kernel_key: Optional[str] = None,
    jobs: Optional[int] = None,
) -> AffinityMatrix:
    """
    Directed spatio-temporal affinity a_ij = Γ̂_T(η_i, η_j).

    No symmetrization; entries with t_j < t_i are zero.

    Raises:
        GridCompatibilityError: if two dataset points share a grid cell
    """
    if not kernel.manifold.has_time or dataset.t is None:
        raise DomainError("directed affinity needs an MT kernel and a timed dataset")
    columns = _checked_columns(dataset, kernel)
    entries = pairwise_weights(kernel, columns, identify_orientation=False, jobs=jobs)
    t = columns["t"]
    entries[t[None, :] < t[:, None]] = 0.0
    return AffinityMatrix(
        entries=entries,
        symmetric=False,
        provenance=_provenance("cortical_directed", dataset, kernel, kernel_key),
    )
