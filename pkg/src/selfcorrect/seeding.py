"""Hierarchical seeding and deterministic hashing.

A single integer seed fans out along a path of integers
(experiment -> trial -> call) through numpy's SeedSequence, so the stream a
trial sees never depends on scheduling or on how many other trials ran.
"""
from __future__ import annotations

import zlib

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def label(name: str) -> int:
    """Stable 32-bit integer for a string path component."""
    return zlib.crc32(name.encode())


def derive_seed(seed: int, *path) -> np.random.SeedSequence:
    parts = [int(seed)] + [label(p) if isinstance(p, str) else int(p) for p in path]
    return np.random.SeedSequence(parts)


def derive_rng(seed: int, *path) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *path))


def child_rng(rng: np.random.Generator) -> np.random.Generator:
    return np.random.default_rng(rng.integers(0, 2**63))


def mix64(z: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer, vectorized over uint64 arrays (wrapping)."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def hash_rows(X, key: int) -> np.ndarray:
    """Keyed 64-bit hash of each row of an integer array (last axis)."""
    X = np.asarray(X, dtype=np.int64)
    h = np.full(X.shape[:-1], np.uint64(key & 0xFFFFFFFFFFFFFFFF), dtype=np.uint64)
    h = mix64(h ^ np.uint64(X.shape[-1]))
    with np.errstate(over="ignore"):
        for i in range(X.shape[-1]):
            h = mix64(h + X[..., i].astype(np.uint64) * _GOLDEN + np.uint64(i + 1))
    return h


def hash_uniform(X, key: int) -> np.ndarray:
    """Hash rows to floats in [0, 1)."""
    return (hash_rows(X, key) >> np.uint64(11)).astype(np.float64) / float(2**53)
