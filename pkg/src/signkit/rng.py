"""Deterministic RNG stream derivation.

Streams are derived from a base seed plus a tuple of string/int keys via
SHA-256, so results are stable across processes, platforms, and Python
versions (unlike the salted builtin ``hash``). Parallel workers that each
derive their own stream from ``(seed, source_id)`` therefore produce output
independent of scheduling.
"""

import hashlib

import numpy as np


def derive_seed(seed: int, *keys) -> int:
    """Collapse (seed, *keys) into a stable 128-bit integer."""
    h = hashlib.sha256()
    h.update(str(int(seed)).encode("utf-8"))
    for key in keys:
        h.update(b"/")
        h.update(str(key).encode("utf-8"))
    return int.from_bytes(h.digest()[:16], "little")


def derive_rng(seed: int, *keys) -> np.random.Generator:
    """A PCG64 generator seeded from (seed, *keys)."""
    return np.random.default_rng(derive_seed(seed, *keys))
