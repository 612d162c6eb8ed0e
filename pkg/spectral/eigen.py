"""Full eigendecomposition of normalized affinities with canonical eigenvectors."""
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
from loguru import logger
from scipy import linalg

from affinity import NormalizedAffinity
from config.errors import SpectralError
from config.settings import settings

DEGENERACY_TOLERANCE = 1e-9
REAL_TOLERANCE = 1e-10
SORT_DECIMALS = 12
# near-equal moduli or scores resolve to the lowest index
TIE_TOLERANCE = 1e-9


@dataclass(frozen=True)
class EigenSystem:
    """
    Eigenpairs (λ_i, u_i) of P sorted by |λ| descending.

    ``vectors`` holds u_i as unit-norm columns with the phase fixed so the
    largest-modulus component is real and positive.
    """

    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def is_real(self) -> np.ndarray:
        return np.abs(self.values.imag) <= REAL_TOLERANCE

    def uplus(self, q: Optional[int] = None) -> np.ndarray:
        """Real columns u⁺ = Re u + Im u of the leading ``q`` eigenvectors."""
        q = self.n if q is None else q
        leading = self.vectors[:, :q]
        return leading.real + leading.imag

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "index": np.arange(self.n),
                "real": self.values.real,
                "imag": self.values.imag,
                "modulus": np.abs(self.values),
                "residual": self.residuals,
            }
        )

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, lineterminator="\n")
        return path

    def uplus_to_csv(self, path: str | Path, q: Optional[int] = None) -> Path:
        """Per-point u⁺ values, one column per eigenvector."""
        path = Path(path)
        columns = self.uplus(q)
        frame = pd.DataFrame(columns, columns=[f"u{j}" for j in range(columns.shape[1])])
        frame.insert(0, "point", np.arange(self.n))
        frame.to_csv(path, index=False, lineterminator="\n")
        return path


def _sort_order(values: np.ndarray) -> np.ndarray:
    modulus = np.round(np.abs(values), SORT_DECIMALS)
    real = np.round(values.real, SORT_DECIMALS)
    return np.lexsort((np.arange(values.size), -real, -modulus))


def _fix_phase(vectors: np.ndarray) -> np.ndarray:
    """Unit-normalize columns and rotate each so its first largest-modulus entry is real positive."""
    vectors = vectors / np.linalg.norm(vectors, axis=0, keepdims=True)
    modulus = np.abs(vectors)
    pivot = np.argmax(modulus >= modulus.max(axis=0, keepdims=True) - TIE_TOLERANCE, axis=0)
    anchor = vectors[pivot, np.arange(vectors.shape[1])]
    return vectors * (np.conj(anchor) / np.abs(anchor))[None, :]


def _degenerate_groups(values: np.ndarray) -> list[tuple[int, int]]:
    """Runs [start, stop) of sorted real eigenvalues equal within the degeneracy tolerance."""
    groups = []
    real = np.abs(values.imag) <= REAL_TOLERANCE
    start = 0
    while start < values.size:
        stop = start + 1
        while (
            stop < values.size
            and real[start]
            and real[stop]
            and abs(values[stop].real - values[start].real) < DEGENERACY_TOLERANCE
        ):
            stop += 1
        if stop - start > 1:
            groups.append((start, stop))
        start = stop
    return groups


def canonical_basis(U: np.ndarray) -> np.ndarray:
    """
    Basis of span(U) that is the identity on a set of pivot rows.

    Column-pivoted QR of Uᵀ picks m well-conditioned rows; U·inv(U[piv]) is 1 on
    its own pivot row and 0 on the others. Columns come out ordered by pivot row,
    so for an eigenspace spanned by block indicators each column is one block.
    """
    m = U.shape[1]
    _, _, piv = linalg.qr(U.T, mode="economic", pivoting=True)
    rows = np.sort(piv[:m])
    return U @ linalg.inv(U[rows, :])


def _residuals(P: np.ndarray, values: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    return np.linalg.norm(P @ vectors - vectors * values[None, :], axis=0)


def eigendecompose(
    P: NormalizedAffinity,
    tolerance: Optional[float] = None,
    use_symmetric: bool = True,
) -> EigenSystem:
    """
    Solve P u_i = λ_i u_i for all n pairs.

    Args:
        P: Normalized affinity
        tolerance: Relative residual bound (default ``settings.residual_tolerance``)
        use_symmetric: Use the symmetric solver on D^{1/2} P D^{-1/2} when P came
            from a symmetric affinity

    Returns:
        EigenSystem sorted by |λ| descending, then real part descending, then
        solver order

    Raises:
        SpectralError: if the solver fails or a pair fails the residual check
    """
    tolerance = settings.residual_tolerance if tolerance is None else tolerance
    entries = P.entries
    try:
        if use_symmetric and P.symmetric:
            w, V = linalg.eigh(P.similar_symmetric())
            values = w.astype(complex)
            vectors = (V / np.sqrt(P.degrees)[:, None]).astype(complex)
        else:
            values, vectors = linalg.eig(entries)
    except (linalg.LinAlgError, ValueError) as e:
        logger.error(f"Eigensolver failed on a {P.n}x{P.n} matrix: {e}")
        raise SpectralError(str(e)) from e

    order = _sort_order(values)
    values = values[order]
    vectors = _fix_phase(vectors[:, order])
    values = np.where(np.abs(values.imag) <= REAL_TOLERANCE, values.real + 0j, values)

    for start, stop in _degenerate_groups(values):
        block = vectors[:, start:stop].real
        if np.linalg.matrix_rank(block, tol=1e-6) < stop - start:
            # defective eigenvalue: the solver vectors are (nearly) parallel
            logger.debug(f"Eigenvalue {values[start].real:.12f} is defective, keeping solver vectors")
            continue
        vectors[:, start:stop] = canonical_basis(block)
        logger.debug(f"Canonical basis for {stop - start}-fold eigenvalue {values[start].real:.12f}")
    vectors = _fix_phase(vectors)

    residuals = _residuals(entries, values, vectors)
    bound = tolerance * max(np.abs(entries).sum(axis=1).max(), 1.0)
    if np.any(residuals > bound):
        worst = int(np.argmax(residuals))
        raise SpectralError(f"eigenpair {worst} residual {residuals[worst]:.3e} exceeds {bound:.3e}")
    logger.debug(f"Eigendecomposition of {P.n}x{P.n} P, leading |lambda| {np.abs(values[:3]).round(6).tolist()}")
    return EigenSystem(values=values, vectors=vectors, residuals=residuals)
