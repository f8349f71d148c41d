"""Percentage-error metrics."""
from __future__ import annotations

import numpy as np


def _check(predictions, actuals) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(predictions, dtype=float)
    y = np.asarray(actuals, dtype=float)
    if p.shape != y.shape:
        raise ValueError(f"length mismatch: {p.shape} predictions vs {y.shape} actuals")
    if y.size == 0:
        raise ValueError("no values")
    if np.any(~(y > 0)):
        raise ValueError("actual values must be positive")
    return p, y


def mape(predictions, actuals) -> float:
    """Mean absolute percentage error, as a fraction (0.1 == 10%)."""
    p, y = _check(predictions, actuals)
    return float(np.mean(np.abs((p - y) / y)))


def mspe(predictions, actuals) -> float:
    """Mean squared percentage error, as a fraction."""
    p, y = _check(predictions, actuals)
    return float(np.mean(((p - y) / y) ** 2))
