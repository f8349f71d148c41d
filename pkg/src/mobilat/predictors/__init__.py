"""Latency regressors: nonnegative Lasso, random forest and GBDT."""
from __future__ import annotations

from typing import Union

import numpy as np

from .forest import RandomForestModel, train_rf
from .gbdt import GbdtModel, train_gbdt
from .lasso import LassoModel, feature_importance, train_lasso
from .metrics import mape, mspe
from .tree import RegressionTree

Model = Union[LassoModel, RandomForestModel, GbdtModel]

ALGORITHMS = ("lasso", "rf", "gbdt")


def model_kind(model: Model) -> str:
    if isinstance(model, LassoModel):
        return "lasso"
    if isinstance(model, RandomForestModel):
        return "rf"
    if isinstance(model, GbdtModel):
        return "gbdt"
    raise TypeError(f"not a latency model: {type(model).__name__}")


def predict(model: Model, rows) -> np.ndarray:
    """Predicted latencies (ms) for standardized rows (one row or a matrix)."""
    return model.predict(rows)


def train(algo: str, X, y, seed: int = 0, **kwargs) -> Model:
    if algo == "lasso":
        return train_lasso(X, y, seed=seed, **kwargs)
    if algo == "rf":
        return train_rf(X, y, seed=seed, **kwargs)
    if algo == "gbdt":
        return train_gbdt(X, y, seed=seed, **kwargs)
    raise ValueError(f"unknown algorithm {algo!r}; choose from {ALGORITHMS}")


def model_to_payload(model: Model) -> dict:
    kind = model_kind(model)
    if kind == "lasso":
        return {"weights": model.weights.tolist(), "intercept": model.intercept, "alpha": model.alpha}
    if kind == "rf":
        return {"min_samples_split": model.min_samples_split, "seed": model.seed,
                "trees": [t.to_dict() for t in model.trees]}
    return {"base_value": model.base_value, "learning_rate": model.learning_rate,
            "min_samples_split": model.min_samples_split, "max_depth": model.max_depth,
            "stages": [t.to_dict() for t in model.stages]}


def model_from_payload(kind: str, payload: dict) -> Model:
    if kind == "lasso":
        return LassoModel(np.asarray(payload["weights"], dtype=float),
                          float(payload["intercept"]), float(payload["alpha"]))
    if kind == "rf":
        return RandomForestModel(tuple(RegressionTree.from_dict(t) for t in payload["trees"]),
                                 int(payload["min_samples_split"]), int(payload["seed"]))
    if kind == "gbdt":
        return GbdtModel(tuple(RegressionTree.from_dict(t) for t in payload["stages"]),
                         float(payload["base_value"]), float(payload["learning_rate"]),
                         int(payload["min_samples_split"]), int(payload["max_depth"]))
    raise ValueError(f"unknown model kind {kind!r}")


__all__ = [
    "ALGORITHMS", "GbdtModel", "LassoModel", "Model", "RandomForestModel", "RegressionTree",
    "feature_importance", "mape", "model_from_payload", "model_kind", "model_to_payload",
    "mspe", "predict", "train", "train_gbdt", "train_lasso", "train_rf",
]
