"""Content-addressed on-disk store for estimated kernels."""
import json
from io import BytesIO
import os
from pathlib import Path
from typing import Optional

import numpy as np
from loguru import logger

from config.hashing import canonical_json, sha256_hex
from config.settings import settings
from features import FeaturePoint
from .estimator import DiscreteKernel, KernelSlice, velocity_bins
from .params import KernelParams
from .processes import ProcessKind, ProcessSpec

FORMAT_VERSION = 1

_RECORD = np.dtype([("slice", "<i4"), ("cell", "<i8"), ("weight", "<f8")])


def kernel_header(process: ProcessSpec, params: KernelParams, base_bins: Optional[list[int]] = None) -> dict:
    """Header fields that fully determine a kernel table."""
    if base_bins is None:
        base_bins = [0] if process.kind is ProcessKind.SE2 else velocity_bins(params.grid)
    return {
        "format": FORMAT_VERSION,
        "process": process.header(),
        "params": params.header(),
        "base_bins": sorted(base_bins),
    }


def cache_key(header: dict) -> str:
    return sha256_hex(canonical_json(header))


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


class KernelCache:
    """
    Stores kernels under ``<cache_dir>/<key>.json`` (header and slice bases) and
    ``<cache_dir>/<key>.npy`` (records of slice, linear cell id, weight).

    Both files are byte-deterministic functions of the kernel.
    """

    def __init__(self, cache_dir: Optional[str | Path] = None):
        self.logger = logger.bind(name=self.__class__.__name__)
        self.cache_dir = Path(cache_dir or settings.cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)

    def paths(self, key: str) -> tuple[Path, Path]:
        return self.cache_dir / f"{key}.json", self.cache_dir / f"{key}.npy"

    def contains(self, key: str) -> bool:
        return all(p.exists() for p in self.paths(key))

    def put(self, kernel: DiscreteKernel) -> str:
        """Write a kernel and return its cache key."""
        header = kernel_header(kernel.process, kernel.params, list(kernel.slices))
        key = cache_key(header)
        meta_path, data_path = self.paths(key)
        records = np.concatenate(
            [
                np.rec.fromarrays(
                    [np.full(sl.ids.size, b, dtype="<i4"), sl.ids.astype("<i8"), sl.weights.astype("<f8")],
                    dtype=_RECORD,
                )
                for b, sl in sorted(kernel.slices.items())
            ]
        ) if kernel.slices else np.empty(0, dtype=_RECORD)
        meta = {
            "key": key,
            "header": header,
            "slices": {
                str(b): {"base": sl.base.model_dump(mode="json"), "cells": int(sl.ids.size), "spilled": sl.spilled}
                for b, sl in sorted(kernel.slices.items())
            },
        }
        try:
            buffer = BytesIO()
            np.save(buffer, np.asarray(records, dtype=_RECORD), allow_pickle=False)
            _atomic_write(data_path, buffer.getvalue())
            _atomic_write(meta_path, json.dumps(meta, sort_keys=True, indent=2).encode("utf-8") + b"\n")
        except OSError as e:
            self.logger.error(f"Could not write kernel cache {key}: {e}")
            raise
        self.logger.info(f"Kernel cached as {key[:16]}")
        return key

    def load(self, key: str) -> DiscreteKernel:
        meta_path, data_path = self.paths(key)
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        header = meta["header"]
        process = ProcessSpec(**header["process"])
        params = KernelParams(**header["params"])
        records = np.load(data_path, allow_pickle=False)
        slices = {}
        for b_str, info in meta["slices"].items():
            b = int(b_str)
            rows = records[records["slice"] == b]
            slices[b] = KernelSlice(
                base=FeaturePoint(**info["base"]),
                ids=np.ascontiguousarray(rows["cell"], dtype=np.int64),
                weights=np.ascontiguousarray(rows["weight"], dtype=float),
                spilled=int(info["spilled"]),
            )
        self.logger.debug(f"Loaded kernel {key[:16]} with {len(slices)} slice(s)")
        return DiscreteKernel(process=process, params=params, slices=slices)

    def get(self, process: ProcessSpec, params: KernelParams, base_bins: Optional[list[int]] = None) -> Optional[DiscreteKernel]:
        key = cache_key(kernel_header(process, params, base_bins))
        if not self.contains(key):
            return None
        return self.load(key)


def export_json(kernel: DiscreteKernel, path: str | Path) -> Path:
    """JSON form of a kernel: header plus ``[slice, cell index, weight]`` rows."""
    path = Path(path)
    rows = []
    for b, sl in sorted(kernel.slices.items()):
        for cell, weight in zip(kernel.grid.unravel(sl.ids), sl.weights):
            rows.append([b, [int(i) for i in cell], float(weight)])
    header = kernel_header(kernel.process, kernel.params, list(kernel.slices))
    payload = {"key": cache_key(header), "header": header, "weights": rows}
    path.write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")
    return path
