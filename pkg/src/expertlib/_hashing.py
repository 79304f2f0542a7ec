"""FNV-1a 64-bit hashing, shared by the tokenizer and the text embedder.

The scalar implementation is the reference; the vectorized one exists because
embedding thousands of keys with a per-byte Python loop is too slow. Both must
agree bit-for-bit (tested).
"""

from __future__ import annotations

import numpy as np

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes, seed: int = 0) -> int:
    """FNV-1a over ``seed || data`` where the seed is 8 little-endian bytes."""
    h = FNV64_OFFSET
    for b in (seed & _MASK64).to_bytes(8, "little") + data:
        h = ((h ^ b) * FNV64_PRIME) & _MASK64
    return h


def fnv1a64_seed_state(seed: int = 0) -> int:
    """Hash state after absorbing only the 8 seed bytes."""
    h = FNV64_OFFSET
    for b in (seed & _MASK64).to_bytes(8, "little"):
        h = ((h ^ b) * FNV64_PRIME) & _MASK64
    return h


def fnv1a64_windows(windows: np.ndarray, seed_state: int) -> np.ndarray:
    """Hash each row of a (num_windows, width) uint8 array.

    Continues from ``seed_state`` so results equal fnv1a64(row_bytes, seed).
    Relies on uint64 wraparound semantics for the modular multiply.
    """
    if windows.ndim != 2:
        raise ValueError("windows must be 2-D")
    h = np.full(windows.shape[0], seed_state, dtype=np.uint64)
    prime = np.uint64(FNV64_PRIME)
    with np.errstate(over="ignore"):
        for col in range(windows.shape[1]):
            h = (h ^ windows[:, col].astype(np.uint64)) * prime
    return h
