"""Gradient-boosted regression trees for the squared percentage error.

For the loss sum_i ((F_i - y_i) / y_i)**2 each stage fits a tree to the
residuals y - F with sample weights 1/y**2, i.e. to the negative gradient
rescaled by the per-sample curvature.  This keeps predictions covariant under
a rescaling of the targets.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .cv import kfold_splits, pick_best
from .metrics import mape
from .tree import RegressionTree, grow_tree, presort

N_STAGES_GRID = (1, 10, 25, 50, 100, 200)
MIN_SPLIT_GRID = (2, 3, 4, 5, 6, 7)
LEARNING_RATE = 0.1
MAX_DEPTH = 6


@dataclass(frozen=True)
class GbdtModel:
    stages: tuple[RegressionTree, ...]
    base_value: float
    learning_rate: float
    min_samples_split: int
    max_depth: int
    cv_mape: Optional[float] = None
    cv_scores: dict = field(default_factory=dict, compare=False)

    @property
    def n_stages(self) -> int:
        return len(self.stages)

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        total = np.zeros(len(X))
        for tree in self.stages:
            total += tree.predict(X)
        return self.base_value + self.learning_rate * total


def boost(X, y, n_stages, min_samples_split, learning_rate=LEARNING_RATE, max_depth=MAX_DEPTH):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    w = 1.0 / y ** 2
    base = float(np.sum(w * y) / np.sum(w))
    F = np.full(len(y), base)
    order = presort(X)
    stages = []
    for _ in range(n_stages):
        tree = grow_tree(X, y - F, w, min_samples_split=min_samples_split, max_depth=max_depth,
                         presorted=order)
        F += learning_rate * tree.predict(X)
        stages.append(tree)
    return base, stages


def train_gbdt(
    X,
    y,
    *,
    seed: int = 0,
    folds: int = 5,
    n_stages_grid: Sequence[int] = N_STAGES_GRID,
    min_split_grid: Sequence[int] = MIN_SPLIT_GRID,
    learning_rate: float = LEARNING_RATE,
    max_depth: int = MAX_DEPTH,
) -> GbdtModel:
    """Choose (min_samples_split, n_stages) by cross-validated MAPE and refit."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(y) == 0:
        raise ValueError("empty training data")
    if not np.all(y > 0):
        raise ValueError("latencies must be positive")
    n_stages_grid = sorted(n_stages_grid)
    candidates = [(n, m) for n in n_stages_grid for m in sorted(min_split_grid, reverse=True)]

    splits = kfold_splits(len(y), folds, seed)
    scores = None
    if splits:
        preds = {c: np.zeros(len(y)) for c in candidates}
        for train, test in splits:
            for m in min_split_grid:
                base, stages = boost(X[train], y[train], max(n_stages_grid), m, learning_rate, max_depth)
                running = np.full(len(test), base)
                done = 0
                for n in n_stages_grid:
                    for tree in stages[done:n]:
                        running = running + learning_rate * tree.predict(X[test])
                    done = n
                    preds[(n, m)][test] = running
        scores = [mape(preds[c], y) for c in candidates]
        best = candidates[pick_best(scores)]
    else:
        best = candidates[0]
    n, m = best
    base, stages = boost(X, y, n, m, learning_rate, max_depth)
    return GbdtModel(
        tuple(stages), base, learning_rate, m, max_depth,
        cv_mape=None if scores is None else scores[candidates.index(best)],
        cv_scores={} if scores is None else dict(zip(candidates, scores)),
    )
