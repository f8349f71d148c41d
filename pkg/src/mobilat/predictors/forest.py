"""Random forest of weighted regression trees on bootstrap samples."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .cv import derive_seed, kfold_splits, pick_best
from .metrics import mape
from .tree import RegressionTree, grow_tree

N_TREES_GRID = tuple(range(1, 11))
MIN_SPLIT_GRID = (2, 5, 10, 20, 50)


@dataclass(frozen=True)
class RandomForestModel:
    trees: tuple[RegressionTree, ...]
    min_samples_split: int
    seed: int
    cv_mape: Optional[float] = None
    cv_scores: dict = field(default_factory=dict, compare=False)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.mean([t.predict(X) for t in self.trees], axis=0)


def grow_forest(X, y, n_trees: int, min_samples_split: int, seed: int) -> list[RegressionTree]:
    """Tree ``t`` depends only on (seed, t), so a forest's prefix is a smaller forest."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    trees = []
    for t in range(n_trees):
        rng = np.random.default_rng(derive_seed(seed, "tree", t))
        idx = np.sort(rng.integers(0, len(y), len(y)))
        yb = y[idx]
        trees.append(grow_tree(X[idx], yb, 1.0 / yb ** 2, min_samples_split=min_samples_split))
    return trees


def train_rf(
    X,
    y,
    *,
    seed: int = 0,
    folds: int = 5,
    n_trees_grid: Sequence[int] = N_TREES_GRID,
    min_split_grid: Sequence[int] = MIN_SPLIT_GRID,
) -> RandomForestModel:
    """Choose (min_samples_split, n_trees) by cross-validated MAPE and refit."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(y) == 0:
        raise ValueError("empty training data")
    if not np.all(y > 0):
        raise ValueError("latencies must be positive")
    n_trees_grid = sorted(n_trees_grid)
    # Simplest first: fewest trees, then the largest split threshold.
    candidates = [(n, m) for n in n_trees_grid for m in sorted(min_split_grid, reverse=True)]

    splits = kfold_splits(len(y), folds, seed)
    scores = None
    if splits:
        preds = {c: np.zeros(len(y)) for c in candidates}
        for f, (train, test) in enumerate(splits):
            for m in min_split_grid:
                trees = grow_forest(X[train], y[train], max(n_trees_grid), m, derive_seed(seed, "fold", f))
                per_tree = np.array([t.predict(X[test]) for t in trees])
                running = np.cumsum(per_tree, axis=0)
                for n in n_trees_grid:
                    preds[(n, m)][test] = running[n - 1] / n
        scores = [mape(preds[c], y) for c in candidates]
        best = candidates[pick_best(scores)]
    else:
        best = candidates[0]
    n_trees, m = best
    trees = grow_forest(X, y, n_trees, m, seed)
    return RandomForestModel(
        tuple(trees), m, seed,
        cv_mape=None if scores is None else scores[candidates.index(best)],
        cv_scores={} if scores is None else dict(zip(candidates, scores)),
    )
