"""Affinity matrices, row-stochastic normalization and their combinations."""
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
from loguru import logger
from scipy import linalg

from config.errors import DomainError, ShapeMismatchError


def _square(entries: np.ndarray) -> np.ndarray:
    entries = np.asarray(entries, dtype=float)
    if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
        raise ShapeMismatchError(f"affinity must be square, got shape {entries.shape}")
    if not np.all(np.isfinite(entries)):
        raise DomainError("affinity entries must be finite")
    return entries


def _write_csv(entries: np.ndarray, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(entries).to_csv(path, index=False, lineterminator="\n")
    return path


@dataclass(frozen=True)
class AffinityMatrix:
    """Dense nonnegative pairwise weights a_ij."""

    entries: np.ndarray
    symmetric: bool = False
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        entries = _square(self.entries)
        if np.any(entries < 0):
            raise DomainError("affinity entries must be nonnegative")
        if self.symmetric and not np.array_equal(entries, entries.T):
            raise DomainError("affinity flagged symmetric but A != A^T")
        object.__setattr__(self, "entries", entries)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def to_csv(self, path: str | Path) -> Path:
        return _write_csv(self.entries, path)

    def write_provenance(self, path: str | Path) -> Path:
        """JSON descriptor: size, symmetry and the construction record."""
        path = Path(path)
        payload = {"n": self.n, "symmetric": self.symmetric, **self.provenance}
        path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        return path


@dataclass(frozen=True)
class NormalizedAffinity:
    """
    Row-stochastic P = D⁻¹A.

    ``degrees`` are the effective row sums (1 for isolated rows turned into
    self-loops). ``symmetric`` records that P came from a symmetric A, which
    makes P similar to the symmetric D^{-1/2} A D^{-1/2}.
    """

    entries: np.ndarray
    degrees: np.ndarray
    symmetric: bool = False
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        entries = _square(self.entries)
        if np.any(entries < 0):
            raise DomainError("normalized affinity entries must be nonnegative")
        if not np.allclose(entries.sum(axis=1), 1.0, rtol=0.0, atol=1e-12):
            raise DomainError("normalized affinity rows must sum to 1")
        object.__setattr__(self, "entries", entries)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def similar_symmetric(self) -> np.ndarray:
        """D^{1/2} P D^{-1/2}, exactly symmetrized (only meaningful when ``symmetric``)."""
        root = np.sqrt(self.degrees)
        s = root[:, None] * self.entries / root[None, :]
        return 0.5 * (s + s.T)

    def to_csv(self, path: str | Path) -> Path:
        return _write_csv(self.entries, path)


def row_normalize(A: AffinityMatrix) -> NormalizedAffinity:
    """
    P = D⁻¹A with D = diag(row sums).

    Rows summing to zero become the self-loop row e_i.
    """
    entries = A.entries.copy()
    isolated = entries.sum(axis=1) == 0
    if np.any(isolated):
        idx = np.flatnonzero(isolated)
        entries[idx, idx] = 1.0
        logger.debug(f"{idx.size} isolated row(s) normalized to self-loops")
    degrees = entries.sum(axis=1)
    P = entries / degrees[:, None]
    return NormalizedAffinity(entries=P, degrees=degrees, symmetric=A.symmetric, provenance=dict(A.provenance))


def restrict_same_frame(A: AffinityMatrix, t: np.ndarray) -> AffinityMatrix:
    """Zero every a_ij whose points lie in different frames."""
    t = np.asarray(t)
    if t.shape != (A.n,):
        raise ShapeMismatchError(f"{t.shape[0] if t.ndim else 0} frame labels for an affinity of size {A.n}")
    entries = np.where(t[:, None] == t[None, :], A.entries, 0.0)
    provenance = {**A.provenance, "restricted_to_frames": True}
    return AffinityMatrix(entries=entries, symmetric=A.symmetric, provenance=provenance)


def combine(P0: NormalizedAffinity, PT: NormalizedAffinity) -> NormalizedAffinity:
    """Convex combination P = (P0 + PT)/2 of two normalized affinities."""
    if P0.n != PT.n:
        raise ShapeMismatchError(f"cannot combine affinities of sizes {P0.n} and {PT.n}")
    entries = 0.5 * (P0.entries + PT.entries)
    both_symmetric = P0.symmetric and PT.symmetric and np.array_equal(P0.degrees, PT.degrees)
    return NormalizedAffinity(
        entries=entries,
        degrees=P0.degrees if both_symmetric else np.ones(P0.n),
        symmetric=both_symmetric,
        provenance={"combined": [P0.provenance, PT.provenance]},
    )


def spectrum_check(P: NormalizedAffinity, tolerance: float = 1e-10) -> Optional[np.ndarray]:
    """
    Eigenvalues of a symmetric-origin P, logging negative ones.

    Returns:
        Ascending real eigenvalues, or None when P is not from a symmetric A
    """
    if not P.symmetric:
        return None
    eigenvalues = linalg.eigvalsh(P.similar_symmetric())
    negative = eigenvalues[eigenvalues < -tolerance]
    if negative.size:
        logger.warning(
            f"Normalized affinity has {negative.size} negative eigenvalue(s), smallest {negative.min():.3e}"
        )
    return eigenvalues
