"""Threshold-based spectral clustering with a minimum-size background rule."""
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field

from affinity import NormalizedAffinity
from .eigen import TIE_TOLERANCE, EigenSystem, eigendecompose


class SpectrumMode(str, Enum):
    """What the ε/τ threshold is applied to."""

    REAL = "real"  # λ_i itself, real eigenvalues only
    MODULUS = "modulus_squared"  # |λ_i|², for directed affinities


class ClusterParams(BaseModel):
    """Threshold ε, diffusion parameter τ and minimum cluster size M."""

    model_config = ConfigDict(frozen=True)

    epsilon: float = Field(gt=0, lt=1)
    tau: int = Field(ge=1)
    M: int = Field(ge=1)

    @property
    def threshold(self) -> float:
        """(1 − ε)^{1/τ}: an eigenvalue passes when it exceeds this."""
        return (1.0 - self.epsilon) ** (1.0 / self.tau)


@dataclass(frozen=True)
class ClusterLabels:
    """Label 0 is the background C₀; 1..K are units by descending size."""

    labels: np.ndarray
    q: int = 0
    info: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    @property
    def K(self) -> int:
        return int(self.labels.max()) if self.n else 0

    @property
    def sizes(self) -> np.ndarray:
        """Member counts indexed by label 0..K."""
        return np.bincount(self.labels, minlength=self.K + 1)

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame = pd.DataFrame({"point": np.arange(self.n), "label": self.labels})
        frame.to_csv(path, index=False, lineterminator="\n")
        return path

    @classmethod
    def from_csv(cls, path: str | Path) -> "ClusterLabels":
        frame = pd.read_csv(path).sort_values("point")
        return cls(labels=frame["label"].to_numpy(dtype=np.int64))


def select_q(
    eigs: EigenSystem,
    epsilon: float,
    tau: int,
    mode: SpectrumMode = SpectrumMode.REAL,
) -> int:
    """
    Length of the leading run of eigenvalues passing the ε/τ threshold.

    Real mode requires λ_i real with λ_i > (1 − ε)^{1/τ}, so negative values
    always fail. Modulus mode tests |λ_i|² against the same bound.
    """
    threshold = (1.0 - epsilon) ** (1.0 / tau)
    if mode is SpectrumMode.REAL:
        passing = eigs.is_real() & (eigs.values.real > threshold)
    else:
        passing = np.abs(eigs.values) ** 2 > threshold
    failing = np.flatnonzero(~passing)
    return int(failing[0]) if failing.size else eigs.n


def precluster(eigs: EigenSystem, q: int, directed: bool = False) -> np.ndarray:
    """
    Assign each point to argmax_j of the leading ``q`` eigenvector components.

    Directed mode uses the u⁺ columns; ties (within ``TIE_TOLERANCE``) go to
    the lowest j.
    """
    if q < 1:
        raise ValueError("precluster needs q >= 1")
    columns = eigs.uplus(q) if directed else eigs.vectors[:, :q].real
    best = columns.max(axis=1, keepdims=True)
    return np.argmax(columns >= best - TIE_TOLERANCE, axis=1)


def apply_min_size(preclusters: np.ndarray, M: int) -> ClusterLabels:
    """Merge preclusters smaller than M into C₀; relabel the rest 1..K by size."""
    preclusters = np.asarray(preclusters, dtype=np.int64)
    ids, counts = np.unique(preclusters, return_counts=True)
    keep = counts >= M
    # descending size, then ascending original id
    ranked = ids[keep][np.lexsort((ids[keep], -counts[keep]))]
    mapping = {int(old): new for new, old in enumerate(ranked, start=1)}
    labels = np.asarray([mapping.get(int(p), 0) for p in preclusters], dtype=np.int64)
    return ClusterLabels(labels=labels)


def cluster(
    P: NormalizedAffinity,
    params: ClusterParams,
    directed: Optional[bool] = None,
) -> ClusterLabels:
    """
    Full pipeline: eigendecompose, pick q, precluster, apply the size rule.

    Args:
        P: Normalized affinity
        params: ε, τ and M
        directed: Use u⁺ vectors and |λ|² thresholds (default: P is not symmetric)
    """
    directed = (not P.symmetric) if directed is None else directed
    eigs = eigendecompose(P)
    mode = SpectrumMode.MODULUS if directed else SpectrumMode.REAL
    q = select_q(eigs, params.epsilon, params.tau, mode)
    if q == 0:
        logger.warning("No eigenvalue passes the threshold; every point is background")
        return ClusterLabels(labels=np.zeros(P.n, dtype=np.int64), q=0)
    labels = apply_min_size(precluster(eigs, q, directed), params.M)
    leading = eigs.values[:q]
    logger.info(f"Clustering found K={labels.K} unit(s) from q={q} eigenvalue(s), background {labels.sizes[0]}")
    return ClusterLabels(
        labels=labels.labels,
        q=q,
        info={
            "directed": directed,
            "mode": mode.value,
            "leading_real": leading.real.tolist(),
            "leading_imag": leading.imag.tolist(),
        },
    )
