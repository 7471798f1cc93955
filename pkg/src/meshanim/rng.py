"""Counter-based random streams.

Every random draw in the package comes from a Philox generator keyed by
``(seed, role, *indices)``. A stream is addressable: the noise used at
timestep t of a sampling run, or at step s of a training run, can be
regenerated in isolation without replaying anything that came before it.
Materialized and streamed access therefore agree bitwise.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["key_for", "stream", "normal", "uniform", "integers", "permutation"]


def key_for(seed: int, role: str, *indices: int) -> np.ndarray:
    """Derive a 128-bit Philox key from a seed, a role label and indices."""
    h = hashlib.blake2b(digest_size=16)
    h.update(int(seed).to_bytes(8, "little", signed=True))
    h.update(role.encode("utf-8"))
    for idx in indices:
        h.update(b"/")
        h.update(int(idx).to_bytes(8, "little", signed=True))
    return np.frombuffer(h.digest(), dtype=np.uint64).copy()


def stream(seed: int, role: str, *indices: int) -> np.random.Generator:
    """Fresh generator for the addressed stream. Same arguments, same draws."""
    return np.random.Generator(np.random.Philox(key=key_for(seed, role, *indices)))


def normal(seed: int, role: str, *indices: int, shape=()) -> np.ndarray:
    return stream(seed, role, *indices).standard_normal(shape)


def uniform(seed: int, role: str, *indices: int, shape=()) -> np.ndarray:
    return stream(seed, role, *indices).random(shape)


def integers(seed: int, role: str, *indices: int, low: int = 0, high: int = 1, shape=()) -> np.ndarray:
    """Uniform integers in ``[low, high)``."""
    return stream(seed, role, *indices).integers(low, high, size=shape)


def permutation(seed: int, role: str, *indices: int, n: int = 0) -> np.ndarray:
    return stream(seed, role, *indices).permutation(n)
