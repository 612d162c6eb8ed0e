"""Canonical JSON hashing used for cache keys, dataset hashes and sub-seeds."""
import hashlib
import json
from typing import Any


def canonical_json(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":")).encode("utf-8")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def derive_seed(seed: int, *parts: Any) -> int:
    """
    Derive a 63-bit sub-seed from a root seed and a purpose path.

    Example:
        derive_seed(7, "sweep", [0.056, 20], 3)
    """
    digest = hashlib.sha256(canonical_json([int(seed), *parts])).digest()
    return int.from_bytes(digest[:8], "big") >> 1
