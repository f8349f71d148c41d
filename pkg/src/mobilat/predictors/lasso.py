"""Nonnegative L1-regularized linear regression under squared percentage error.

Objective, for standardized rows x_i and latencies y_i > 0::

    (1/N) * sum_i ((b + w.x_i - y_i) / y_i)**2 + alpha * sum_j w_j,   w >= 0

Dividing each row by y_i turns this into an ordinary quadratic in (b, w),
which is minimized by cyclic coordinate descent on its Gram matrix.
The intercept b is neither penalized nor sign-constrained: standardized
features are centred, so a through-origin model would average to zero.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .cv import kfold_splits, pick_best
from .metrics import mape

DEFAULT_ALPHAS = tuple(np.logspace(-5, 2, 15))


@dataclass(frozen=True)
class LassoModel:
    weights: np.ndarray
    intercept: float
    alpha: float
    cv_mape: Optional[float] = None
    cv_scores: dict = field(default_factory=dict, compare=False)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.weights.shape[0]:
            raise ValueError(f"expected {self.weights.shape[0]} features, got {X.shape[1]}")
        return np.maximum(0.0, X @ self.weights + self.intercept)


def _check_data(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("empty training data")
    if X.shape[0] != y.shape[0]:
        raise ValueError("rows and targets differ in length")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite features")
    if not np.all(y > 0):
        raise ValueError("latencies must be positive")
    return X, y


def _gram(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Column 0 is the intercept.  f(v) = v'Qv - 2c'v + 1 is the smooth part.
    Z = np.column_stack([np.ones(len(y)), X]) / y[:, None]
    return Z.T @ Z / len(y), Z.mean(axis=0)


def lasso_objective(X, y, weights, intercept, alpha) -> float:
    r = (np.asarray(X) @ weights + intercept - y) / y
    return float(np.mean(r ** 2) + alpha * np.sum(weights))


def _coordinate_descent(Q, c, alpha, v, tol, max_sweeps, history=None):
    # Cyclic over the weights; each step minimizes jointly over (intercept, w_j).
    # With 1/y row scaling the intercept column is nearly collinear with every
    # feature column, and plain one-coordinate steps crawl for thousands of sweeps.
    q00 = Q[0, 0]
    p = len(c)
    for _ in range(max_sweeps):
        max_delta = 0.0
        for j in range(1, p):
            q0j = Q[0, j]
            r0 = c[0] - Q[0] @ v + q00 * v[0] + q0j * v[j]
            rj = c[j] - Q[j] @ v + Q[j, j] * v[j] + q0j * v[0]
            d = Q[j, j] - q0j * q0j / q00
            g = rj - q0j * r0 / q00
            new = max(0.0, (g - 0.5 * alpha) / d) if d > 1e-12 * Q[j, j] else 0.0
            b = (r0 - q0j * new) / q00
            max_delta = max(max_delta, abs(new - v[j]), abs(b - v[0]))
            v[j] = new
            v[0] = b
        if p == 1:
            v[0] = c[0] / q00
        if history is not None:
            history.append(float(v @ Q @ v - 2 * c @ v + 1.0 + alpha * v[1:].sum()))
        if max_delta < tol:
            break
    return v


def solve_lasso(
    X,
    y,
    alpha: float,
    *,
    tol: float = 1e-8,
    max_sweeps: int = 10_000,
    warm_start: Optional[np.ndarray] = None,
    history: Optional[list] = None,
) -> tuple[np.ndarray, float]:
    """Minimize the objective for one ``alpha``; returns ``(weights, intercept)``.

    Stops when no coordinate moves by ``tol`` or more in a sweep.  When
    ``history`` is a list, the objective after every sweep is appended to it.
    """
    X, y = _check_data(X, y)
    Q, c = _gram(X, y)
    v = np.zeros(len(c)) if warm_start is None else np.array(warm_start, dtype=float)
    v = _coordinate_descent(Q, c, float(alpha), v, tol, max_sweeps, history)
    return v[1:].copy(), float(v[0])


def kkt_residual(X, y, weights, intercept, alpha) -> float:
    """Largest violation of the optimality conditions at ``(weights, intercept)``."""
    X, y = _check_data(X, y)
    Q, c = _gram(X, y)
    v = np.concatenate([[intercept], weights])
    grad = 2.0 * (Q @ v - c)
    res = [abs(grad[0])]
    for j, wj in enumerate(weights, start=1):
        if wj > 0:
            res.append(abs(grad[j] + alpha))
        else:
            res.append(max(0.0, -alpha - grad[j]))
    return float(max(res))


def _path(X, y, alphas_desc, tol, max_sweeps):
    Q, c = _gram(X, y)
    v = np.zeros(len(c))
    out = []
    for a in alphas_desc:
        v = _coordinate_descent(Q, c, a, v.copy(), tol, max_sweeps)
        out.append((v[1:].copy(), float(v[0])))
    return out


def train_lasso(
    X,
    y,
    alphas: Optional[Sequence[float]] = None,
    *,
    folds: int = 5,
    seed: int = 0,
    tol: float = 1e-8,
    max_sweeps: int = 10_000,
) -> LassoModel:
    """Pick alpha by K-fold cross-validated MAPE, then refit on all rows."""
    X, y = _check_data(X, y)
    alphas = sorted(set(float(a) for a in (DEFAULT_ALPHAS if alphas is None else alphas)), reverse=True)
    if not alphas or min(alphas) < 0:
        raise ValueError("alpha grid must be non-empty and nonnegative")

    splits = kfold_splits(len(y), folds, seed)
    scores = None
    if splits:
        pred = np.zeros((len(alphas), len(y)))
        for train, test in splits:
            for i, (w, b) in enumerate(_path(X[train], y[train], alphas, tol, max_sweeps)):
                pred[i, test] = np.maximum(0.0, X[test] @ w + b)
        scores = [mape(p, y) for p in pred]
        # Largest alpha first, so near-ties go to the sparser model.
        best = pick_best(scores)
    else:
        best = 0
    alpha = alphas[best]
    w, b = solve_lasso(X, y, alpha, tol=tol, max_sweeps=max_sweeps)
    return LassoModel(
        weights=w,
        intercept=b,
        alpha=alpha,
        cv_mape=None if scores is None else scores[best],
        cv_scores={} if scores is None else dict(zip(alphas, scores)),
    )


def feature_importance(model: LassoModel, names: Sequence[str]) -> list[tuple[str, float]]:
    """Features by descending weight; equal weights keep schema order."""
    if len(names) != len(model.weights):
        raise ValueError("names do not match the model's features")
    order = sorted(range(len(names)), key=lambda j: (-model.weights[j], j))
    return [(names[j], float(model.weights[j])) for j in order]
