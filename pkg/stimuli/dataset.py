"""Labeled feature-space datasets and their CSV form."""
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
from loguru import logger

from config.errors import DomainError, ManifestMismatchError, ShapeMismatchError
from config.hashing import sha256_hex
from config.settings import settings
from features import FeaturePoint, GridSpec, Manifold, check_compatibility, wrap_angle

COLUMNS = ("x", "y", "t", "theta", "v", "truth", "arc_position", "arc_length")


@dataclass(frozen=True)
class LabeledDataset:
    """
    Column store of stimulus elements with ground-truth unit labels.

    ``truth`` is 0 for background and 1..U for perceptual units. ``arc_position``
    and ``arc_length`` hold each unit point's arc parameter φ and its unit's
    length L (NaN for background), so velocity assignment works on a dataset
    reloaded from disk.
    """

    x: np.ndarray
    y: np.ndarray
    truth: np.ndarray
    theta: Optional[np.ndarray] = None
    t: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    arc_position: Optional[np.ndarray] = None
    arc_length: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.x)
        for name in ("y", "truth", "theta", "t", "v", "arc_position", "arc_length"):
            column = getattr(self, name)
            if column is not None and len(column) != n:
                raise ShapeMismatchError(f"column '{name}' has {len(column)} rows, expected {n}")
        if self.theta is not None:
            object.__setattr__(self, "theta", wrap_angle(np.asarray(self.theta, dtype=float)))
        if self.v is not None and np.any(np.asarray(self.v) < 0):
            raise DomainError("velocities must be >= 0")
        if self.t is not None and self.v is None:
            raise DomainError("a timed dataset must carry velocities")
        labels = np.unique(self.truth)
        if labels.size and not np.array_equal(labels[labels > 0], np.arange(1, labels.max() + 1)):
            raise DomainError(f"unit labels must be contiguous from 1, got {labels.tolist()}")

    # ------------------------------------------------------------------
    # Shape
    # ------------------------------------------------------------------
    @property
    def n(self) -> int:
        return len(self.x)

    @property
    def n_units(self) -> int:
        return int(self.truth.max()) if self.n else 0

    @property
    def manifold(self) -> Optional[Manifold]:
        """Feature manifold of the points; None for position-only datasets."""
        if self.theta is None:
            return None
        if self.v is None:
            return Manifold.M3
        return Manifold.M0 if self.t is None else Manifold.MT

    @property
    def domain(self) -> float:
        return float(self.meta.get("domain", settings.domain_size))

    @property
    def n_frames(self) -> int:
        return int(self.t.max()) + 1 if self.t is not None and self.n else 1

    @property
    def points(self) -> list[FeaturePoint]:
        if self.theta is None:
            raise DomainError("position-only dataset has no feature points")
        return [
            FeaturePoint(
                x=float(self.x[i]),
                y=float(self.y[i]),
                theta=float(self.theta[i]),
                t=None if self.t is None else float(self.t[i]),
                v=None if self.v is None else float(self.v[i]),
            )
            for i in range(self.n)
        ]

    def positions(self) -> np.ndarray:
        return np.stack([self.x, self.y], axis=1)

    def columns(self) -> dict[str, np.ndarray]:
        return {
            name: np.asarray(getattr(self, name), dtype=float)
            for name in ("x", "y", "t", "theta", "v")
            if getattr(self, name) is not None
        }

    def coords(self, dims: tuple[str, ...]) -> np.ndarray:
        cols = self.columns()
        missing = [d for d in dims if d not in cols]
        if missing:
            raise DomainError(f"dataset lacks coordinates {missing}")
        return np.stack([cols[d] for d in dims], axis=1)

    def grid(self, manifold: Optional[Manifold] = None, **widths) -> GridSpec:
        """Covering grid over this dataset's domain."""
        manifold = manifold or self.manifold
        v_max = widths.pop("v_max", None)
        return GridSpec.for_dataset(manifold, domain=self.domain, v_max=v_max, n_frames=self.n_frames, **widths)

    def check_grid(self, g: GridSpec) -> None:
        """Raise if two points share a cell of ``g``."""
        check_compatibility(self.coords(g.dims), g)

    # ------------------------------------------------------------------
    # Derived datasets
    # ------------------------------------------------------------------
    def with_columns(self, **changes) -> "LabeledDataset":
        return replace(self, **changes)

    def take(self, order: np.ndarray) -> "LabeledDataset":
        """Rows reordered (or subset) by ``order``."""
        order = np.asarray(order, dtype=int)
        changes = {}
        for name in ("x", "y", "truth", "theta", "t", "v", "arc_position", "arc_length"):
            column = getattr(self, name)
            if column is not None:
                changes[name] = np.asarray(column)[order]
        return replace(self, **changes)

    # ------------------------------------------------------------------
    # IO
    # ------------------------------------------------------------------
    def to_frame(self) -> pd.DataFrame:
        nan = np.full(self.n, np.nan)
        frame = pd.DataFrame(
            {
                name: nan if getattr(self, name) is None else np.asarray(getattr(self, name), dtype=float)
                for name in ("x", "y", "t", "theta", "v")
            }
        )
        frame["truth"] = np.asarray(self.truth, dtype=np.int64)
        frame["arc_position"] = nan if self.arc_position is None else self.arc_position
        frame["arc_length"] = nan if self.arc_length is None else self.arc_length
        return frame[list(COLUMNS)]

    def to_csv_bytes(self) -> bytes:
        return self.to_frame().to_csv(index=False, lineterminator="\n").encode("utf-8")

    def content_hash(self) -> str:
        return sha256_hex(self.to_csv_bytes())

    def to_csv(self, path: str | Path) -> Path:
        """Write ``path`` plus a ``<stem>.meta.json`` sidecar holding meta and the content hash."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        data = self.to_csv_bytes()
        path.write_bytes(data)
        sidecar = {"meta": self.meta, "content_hash": sha256_hex(data)}
        meta_path(path).write_text(json.dumps(sidecar, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        logger.info(f"Dataset written to {path} ({self.n} points, {self.n_units} units)")
        return path

    @classmethod
    def from_csv(cls, path: str | Path, expected_hash: Optional[str] = None) -> "LabeledDataset":
        """
        Load a dataset written by :meth:`to_csv`.

        Raises:
            ManifestMismatchError: if the CSV bytes do not match ``expected_hash``
                or the hash stored in the sidecar
        """
        path = Path(path)
        data = path.read_bytes()
        digest = sha256_hex(data)
        meta = {}
        sidecar_path = meta_path(path)
        if sidecar_path.exists():
            sidecar = json.loads(sidecar_path.read_text(encoding="utf-8"))
            meta = sidecar.get("meta", {})
            expected_hash = expected_hash or sidecar.get("content_hash")
        if expected_hash is not None and digest != expected_hash:
            raise ManifestMismatchError(f"{path} hash {digest[:12]} does not match recorded {expected_hash[:12]}")
        frame = pd.read_csv(path, float_precision="round_trip")

        def optional(name: str) -> Optional[np.ndarray]:
            column = frame[name].to_numpy(dtype=float)
            return None if np.all(np.isnan(column)) else column

        return cls(
            x=frame["x"].to_numpy(dtype=float),
            y=frame["y"].to_numpy(dtype=float),
            truth=frame["truth"].to_numpy(dtype=np.int64),
            theta=optional("theta"),
            t=optional("t"),
            v=optional("v"),
            arc_position=optional("arc_position"),
            arc_length=optional("arc_length"),
            meta=meta,
        )


def meta_path(path: Path) -> Path:
    return path.with_name(f"{path.stem}.meta.json")
