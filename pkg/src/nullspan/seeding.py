"""Deterministic seed derivation.

A single root seed fans out to independent per-trial streams through
numpy's SeedSequence hash: subseed(root, *path) feeds the root and the
path indices into SeedSequence and takes one 64-bit word. The same
(root, path) always yields the same stream, and distinct paths are
statistically independent.
"""

from __future__ import annotations

import numpy as np

__all__ = ["subseed", "make_rng"]


def subseed(root: int, *path: int) -> int:
    """64-bit seed derived by hashing the root seed with a trial path."""
    ss = np.random.SeedSequence([int(root) & 0xFFFFFFFFFFFFFFFF, *[int(p) for p in path]])
    return int(ss.generate_state(1, np.uint64)[0])


def make_rng(root: int, *path: int) -> np.random.Generator:
    """Generator seeded from subseed(root, *path)."""
    return np.random.default_rng(subseed(root, *path))
