"""Small shared helpers: seed derivation, canonical JSON, hashing."""

from __future__ import annotations

import hashlib
import json

import numpy as np

_SEED_MASK = (1 << 63) - 1


def derive_seed(*parts) -> int:
    """Fold the given parts into a stable non-negative 63-bit seed.

    Accepts ints, strings, bytes and float arrays. The result depends only
    on the values, never on process state, so derived seeds are replayable.
    """
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, (bool, int, np.integer)):
            h.update(b"i" + int(part).to_bytes(16, "little", signed=True))
        elif isinstance(part, bytes):
            h.update(b"b" + part)
        elif isinstance(part, str):
            h.update(b"s" + part.encode("utf-8"))
        elif isinstance(part, np.ndarray):
            h.update(b"a" + np.ascontiguousarray(part, dtype="<f8").tobytes())
        elif isinstance(part, (float, np.floating)):
            h.update(b"f" + np.float64(part).tobytes())
        else:
            raise TypeError(f"cannot derive a seed from {type(part).__name__}")
    return int.from_bytes(h.digest()[:8], "little") & _SEED_MASK


def jsonable(obj):
    """Recursively convert numpy scalars/arrays so json.dumps accepts them."""
    if isinstance(obj, dict):
        return {k: jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def canonical_json(obj) -> str:
    """Serialize with sorted keys and fixed separators (hash-stable)."""
    return json.dumps(jsonable(obj), sort_keys=True, separators=(",", ":"))


def config_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()
