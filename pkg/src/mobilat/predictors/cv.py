"""Seeded K-fold splits and stable seed derivation."""
from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(master: int, *labels) -> int:
    """Stable 63-bit seed from a master seed and any labels (independent of hash randomization)."""
    text = "/".join([str(int(master))] + [str(label) for label in labels])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little") >> 1


def kfold_splits(n: int, k: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Contiguous folds over a seeded permutation of ``range(n)``.

    Uses ``min(k, n)`` folds; returns an empty list when ``n < 2``.
    """
    k = min(k, n)
    if k < 2:
        return []
    perm = np.random.default_rng(seed).permutation(n)
    bounds = np.linspace(0, n, k + 1).astype(int)
    splits = []
    for f in range(k):
        test = perm[bounds[f]:bounds[f + 1]]
        train = np.concatenate([perm[:bounds[f]], perm[bounds[f + 1]:]])
        splits.append((train, test))
    return splits


def pick_best(scores, tol: float = 1e-12) -> int:
    """Index of the lowest score; among near-ties the first one wins.

    Callers order candidates from simplest to most complex.
    """
    scores = np.asarray(scores, dtype=float)
    best = float(np.min(scores))
    return int(np.flatnonzero(scores <= best + tol * max(abs(best), 1.0))[0])
