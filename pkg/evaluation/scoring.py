"""Three-component grouping error against ground truth."""
import math
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.optimize import linear_sum_assignment

from config.errors import ShapeMismatchError
from spectral import ClusterLabels


class ErrorBreakdown(BaseModel):
    """
    Grouping error E = (E1 + E2 + E3)/n.

    E1 counts unit points lost to the background, E2 background points captured
    by a unit, E3 unit points outside their unit's matched cluster.
    """

    model_config = ConfigDict(frozen=True)

    E1: float = Field(ge=0)
    E2: float = Field(ge=0)
    E3: float = Field(ge=0)
    n: float = Field(gt=0)
    E: float = Field(ge=0, le=1)

    @model_validator(mode="after")
    def _consistent(self) -> "ErrorBreakdown":
        if not math.isclose(self.E, (self.E1 + self.E2 + self.E3) / self.n, rel_tol=1e-9, abs_tol=1e-12):
            raise ValueError("E must equal (E1 + E2 + E3)/n")
        return self

    @classmethod
    def from_counts(cls, E1: int, E2: int, E3: int, n: int) -> "ErrorBreakdown":
        return cls(E1=E1, E2=E2, E3=E3, n=n, E=(E1 + E2 + E3) / n)

    @classmethod
    def mean(cls, breakdowns: Sequence["ErrorBreakdown"]) -> "ErrorBreakdown":
        """Component means in the given order; E is pooled so the identity still holds."""
        if not breakdowns:
            raise ValueError("cannot average an empty list of breakdowns")
        k = len(breakdowns)
        E1 = sum(b.E1 for b in breakdowns) / k
        E2 = sum(b.E2 for b in breakdowns) / k
        E3 = sum(b.E3 for b in breakdowns) / k
        n = sum(b.n for b in breakdowns) / k
        return cls(E1=E1, E2=E2, E3=E3, n=n, E=(E1 + E2 + E3) / n)


def _as_array(labels: ClusterLabels | np.ndarray) -> np.ndarray:
    if isinstance(labels, ClusterLabels):
        return labels.labels
    return np.asarray(labels, dtype=np.int64)


def match_units(labels: ClusterLabels | np.ndarray, truth: np.ndarray) -> dict[int, Optional[int]]:
    """
    One-to-one assignment of truth units to predicted clusters maximizing overlap.

    Returns:
        Map unit id -> matched cluster id, or None for a unit left without a
        cluster it overlaps
    """
    pred = _as_array(labels)
    truth = np.asarray(truth, dtype=np.int64)
    units = np.unique(truth[truth > 0])
    clusters = np.unique(pred[pred > 0])
    matched: dict[int, Optional[int]] = {int(u): None for u in units}
    if units.size == 0 or clusters.size == 0:
        return matched
    overlap = np.zeros((units.size, clusters.size), dtype=np.int64)
    for i, u in enumerate(units):
        members = pred[truth == u]
        for j, c in enumerate(clusters):
            overlap[i, j] = np.count_nonzero(members == c)
    rows, cols = linear_sum_assignment(overlap, maximize=True)
    for i, j in zip(rows, cols):
        if overlap[i, j] > 0:
            matched[int(units[i])] = int(clusters[j])
    return matched


def score(labels: ClusterLabels | np.ndarray, truth: np.ndarray) -> ErrorBreakdown:
    """
    Score a clustering against ground truth.

    Raises:
        ShapeMismatchError: if labels and truth differ in length
    """
    pred = _as_array(labels)
    truth = np.asarray(truth, dtype=np.int64)
    if pred.shape != truth.shape:
        raise ShapeMismatchError(f"{pred.size} labels for {truth.size} truth entries")
    matched = match_units(pred, truth)
    unit = truth > 0
    E1 = int(np.count_nonzero(unit & (pred == 0)))
    E2 = int(np.count_nonzero(~unit & (pred > 0)))
    # matched cluster per point; -1 for background and unmatched units
    target = np.asarray([matched.get(int(u)) or -1 for u in truth])
    E3 = int(np.count_nonzero(unit & (pred > 0) & (pred != target)))
    return ErrorBreakdown.from_counts(E1, E2, E3, truth.size)
