"""Weighted CART regression tree stored as flat node arrays.

Splits minimize the weighted squared error; leaves hold the weighted mean
target.  Ties between candidate splits go to the lowest feature index, then
the lowest threshold, so growth is fully deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

LEAF = -1


@dataclass(frozen=True)
class RegressionTree:
    feature: np.ndarray      # int, LEAF for leaves
    threshold: np.ndarray    # go left when x[feature] <= threshold
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def node_count(self) -> int:
        return len(self.feature)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] != LEAF
        while active.any():
            idx = np.flatnonzero(active)
            n = node[idx]
            go_left = X[idx, self.feature[n]] <= self.threshold[n]
            node[idx] = np.where(go_left, self.left[n], self.right[n])
            active[idx] = self.feature[node[idx]] != LEAF
        return self.value[node]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionTree":
        tree = cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=float),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["value"], dtype=float),
        )
        n = tree.node_count
        if not all(len(a) == n for a in (tree.threshold, tree.left, tree.right, tree.value)) or n == 0:
            raise ValueError("tree arrays differ in length")
        return tree


@njit(cache=True)
def _grow(X, y, w, order, min_samples_split, max_depth):
    n_samples, n_features = X.shape

    cap = 2 * n_samples + 1
    feature = np.full(cap, LEAF, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, LEAF, np.int64)
    right = np.full(cap, LEAF, np.int64)
    value = np.zeros(cap)
    goes_left = np.zeros(n_samples, np.bool_)
    buf = np.empty(n_samples, np.int64)

    tw = 0.0
    twy = 0.0
    for s in range(n_samples):
        tw += w[s]
        twy += w[s] * y[s]
    value[0] = twy / tw
    n_nodes = 1

    # Each feature's row of ``order`` keeps every node's samples contiguous and
    # sorted; splitting partitions them stably, so no node ever re-sorts.
    stack = np.empty((cap, 4), np.int64)
    stack[0, 0] = 0
    stack[0, 1] = n_samples
    stack[0, 2] = 0
    stack[0, 3] = 0
    top = 1
    while top > 0:
        top -= 1
        a = stack[top, 0]
        b = stack[top, 1]
        node = stack[top, 2]
        depth = stack[top, 3]
        if b - a < min_samples_split or (max_depth >= 0 and depth >= max_depth):
            continue
        tw = 0.0
        twy = 0.0
        for r in range(a, b):
            s = order[0, r]
            tw += w[s]
            twy += w[s] * y[s]
        parent = twy * twy / tw

        best = -np.inf
        best_j = -1
        best_r = -1
        for j in range(n_features):
            cw = 0.0
            cwy = 0.0
            for r in range(a, b - 1):
                s = order[j, r]
                cw += w[s]
                cwy += w[s] * y[s]
                if X[s, j] < X[order[j, r + 1], j]:
                    rw = tw - cw
                    if cw > 0.0 and rw > 0.0:
                        rwy = twy - cwy
                        score = cwy * cwy / cw + rwy * rwy / rw
                        if score > best:
                            best = score
                            best_j = j
                            best_r = r
        if best_j < 0 or not best - parent > 1e-12 * abs(parent):
            continue

        lo = X[order[best_j, best_r], best_j]
        hi = X[order[best_j, best_r + 1], best_j]
        thr = lo + (hi - lo) / 2.0
        if not (lo <= thr and thr < hi):
            thr = lo
        lw = 0.0
        lwy = 0.0
        n_left = 0
        for r in range(a, b):
            s = order[best_j, r]
            goes_left[s] = X[s, best_j] <= thr
            if goes_left[s]:
                lw += w[s]
                lwy += w[s] * y[s]
                n_left += 1
        for j in range(n_features):
            li = a
            ri = 0
            for r in range(a, b):
                s = order[j, r]
                if goes_left[s]:
                    order[j, li] = s
                    li += 1
                else:
                    buf[ri] = s
                    ri += 1
            for k in range(ri):
                order[j, li + k] = buf[k]

        feature[node] = best_j
        threshold[node] = thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        value[n_nodes] = lwy / lw
        value[n_nodes + 1] = (twy - lwy) / (tw - lw)
        stack[top, 0] = a + n_left
        stack[top, 1] = b
        stack[top, 2] = n_nodes + 1
        stack[top, 3] = depth + 1
        stack[top + 1, 0] = a
        stack[top + 1, 1] = a + n_left
        stack[top + 1, 2] = n_nodes
        stack[top + 1, 3] = depth + 1
        top += 2
        n_nodes += 2
    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy())


def grow_tree(
    X,
    y,
    weight=None,
    *,
    min_samples_split: int = 2,
    max_depth: Optional[int] = None,
    presorted: Optional[np.ndarray] = None,
) -> RegressionTree:
    """Grow a tree on (X, y) with positive sample weights.

    ``presorted`` may hold ``presort(X)`` to skip sorting when many trees are
    grown on the same rows; it is not modified.
    """
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    w = np.ones(len(y)) if weight is None else np.ascontiguousarray(weight, dtype=float)
    if len(y) == 0:
        raise ValueError("cannot grow a tree on no samples")
    if X.ndim != 2 or X.shape[0] != len(y) or w.shape != y.shape:
        raise ValueError("X, y and weight disagree in shape")
    if min_samples_split < 2:
        raise ValueError("min_samples_split must be at least 2")
    if not np.all(w > 0):
        raise ValueError("sample weights must be positive")
    depth = -1 if max_depth is None else int(max_depth)
    order = presort(X) if presorted is None else presorted.copy()
    return RegressionTree(*_grow(X, y, w, order, int(min_samples_split), depth))


def presort(X) -> np.ndarray:
    """Per-feature stable sort order of the rows of X, shape (features, rows)."""
    return np.ascontiguousarray(np.argsort(np.asarray(X, dtype=float), axis=0, kind="stable").T)
