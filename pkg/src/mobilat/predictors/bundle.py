"""Trained predictors for many (scenario, kernel kind) pairs, plus per-scenario overhead."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..features import SCHEMA_VERSION, SCHEMAS, FeatureVector, Standardizer, transform
from ..gpu_compile import KernelKind
from ..scenario import ScenarioKey
from . import Model, model_from_payload, model_kind, model_to_payload
from .lasso import LassoModel

FORMAT_VERSION = 1


class MissingPredictorError(KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "missing predictor"


@dataclass(frozen=True)
class BundleEntry:
    standardizer: Standardizer
    model: Model

    @property
    def kind(self) -> KernelKind:
        return self.standardizer.kind

    def predict(self, fv: FeatureVector) -> float:
        return float(self.model.predict(transform(self.standardizer, fv))[0])


def _check_entry(kind: KernelKind, entry: BundleEntry) -> None:
    if entry.standardizer.kind is not kind:
        raise ValueError(f"standardizer for {entry.standardizer.kind.value} filed under {kind.value}")
    width = len(SCHEMAS[kind])
    m = entry.model
    if isinstance(m, LassoModel):
        ok = m.weights.shape == (width,)
    else:
        trees = getattr(m, "trees", None) or getattr(m, "stages", ())
        ok = all(int(t.feature.max(initial=-1)) < width for t in trees)
    if not ok:
        raise ValueError(f"model does not match the {kind.value} feature schema")


@dataclass
class PredictorBundle:
    entries: dict[tuple[ScenarioKey, KernelKind], BundleEntry] = field(default_factory=dict)
    overhead: dict[ScenarioKey, float] = field(default_factory=dict)

    def add(self, scenario: ScenarioKey, kind: KernelKind, entry: BundleEntry) -> None:
        _check_entry(kind, entry)
        self.entries[(scenario, kind)] = entry

    def entry(self, scenario: ScenarioKey, kind: KernelKind) -> BundleEntry:
        try:
            return self.entries[(scenario, kind)]
        except KeyError:
            raise MissingPredictorError(
                f"no {kind.value} predictor for scenario {scenario}") from None

    @property
    def scenarios(self) -> list[ScenarioKey]:
        return sorted({s for s, _ in self.entries} | set(self.overhead))

    def kinds(self, scenario: ScenarioKey) -> list[KernelKind]:
        return [k for s, k in self.entries if s == scenario]

    def merge(self, other: "PredictorBundle") -> "PredictorBundle":
        return PredictorBundle({**self.entries, **other.entries}, {**self.overhead, **other.overhead})

    def to_dict(self) -> dict:
        entries = []
        for (scenario, kind), e in sorted(self.entries.items(), key=lambda kv: (kv[0][0], kv[0][1].value)):
            entries.append({
                "scenario": str(scenario),
                "kernel_kind": kind.value,
                "model_kind": model_kind(e.model),
                "standardizer": {"mu": e.standardizer.mu.tolist(), "sigma": e.standardizer.sigma.tolist()},
                "model": model_to_payload(e.model),
            })
        return {
            "format_version": FORMAT_VERSION,
            "schema_version": SCHEMA_VERSION,
            "scenarios": [str(s) for s in self.scenarios],
            "entries": entries,
            "overhead": {str(s): v for s, v in sorted(self.overhead.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PredictorBundle":
        if d.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported bundle format {d.get('format_version')!r}")
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"bundle built for feature schema {d.get('schema_version')!r}, "
                             f"this build uses {SCHEMA_VERSION}")
        bundle = cls()
        for e in d["entries"]:
            kind = KernelKind(e["kernel_kind"])
            std = Standardizer.from_dict({"kind": kind.value, **e["standardizer"]})
            model = model_from_payload(e["model_kind"], e["model"])
            bundle.add(ScenarioKey.parse(e["scenario"]), kind, BundleEntry(std, model))
        bundle.overhead = {ScenarioKey.parse(s): float(v) for s, v in d.get("overhead", {}).items()}
        return bundle

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "PredictorBundle":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def constant_entry(kind: KernelKind, value_ms: float) -> BundleEntry:
    """A Lasso entry that always predicts ``value_ms``; handy for fixtures and baselines."""
    width = len(SCHEMAS[kind])
    std = Standardizer(np.zeros(width), np.ones(width), kind)
    return BundleEntry(std, LassoModel(np.zeros(width), float(value_ms), 0.0))
