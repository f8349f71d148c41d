"""Latency measurement files: one scenario, many architectures.

The same format serves synthetic data and real device measurements::

    {"scenario": "pixel4:gpu::f32", "gpu": "adreno6xx",
     "architectures": [{"graph_ref": "arch_0000.json", "end_to_end_ms": 12.5,
                        "kernels": [{"id": "b1_conv", "ms": 1.25}, ...]}]}

``gpu`` is optional; kernel ids are base-node ids of the deduced kernels.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

from .scenario import ScenarioKey


@dataclass(frozen=True)
class ArchitectureMeasurement:
    graph_ref: str
    end_to_end_ms: float
    kernels: tuple[tuple[str, float], ...] = ()

    @property
    def kernel_ms(self) -> dict[str, float]:
        return dict(self.kernels)


@dataclass(frozen=True)
class MeasurementSet:
    scenario: ScenarioKey
    architectures: tuple[ArchitectureMeasurement, ...]
    gpu: Optional[str] = None

    def to_dict(self) -> dict:
        d = {"scenario": str(self.scenario)}
        if self.gpu is not None:
            d["gpu"] = self.gpu
        d["architectures"] = [
            {"graph_ref": a.graph_ref, "end_to_end_ms": a.end_to_end_ms,
             "kernels": [{"id": k, "ms": ms} for k, ms in a.kernels]}
            for a in self.architectures
        ]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MeasurementSet":
        try:
            archs = tuple(
                ArchitectureMeasurement(
                    str(a["graph_ref"]), float(a["end_to_end_ms"]),
                    tuple((str(k["id"]), float(k["ms"])) for k in a.get("kernels", [])),
                )
                for a in d["architectures"]
            )
            return cls(ScenarioKey.parse(d["scenario"]), archs, d.get("gpu"))
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed measurement file: {exc!r}") from None

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "MeasurementSet":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))
