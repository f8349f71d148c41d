"""Synthetic ground-truth latency for kernels, for testing the pipeline without a device.

Three cost families are available:

* ``linear``: nonnegative weights over the raw schema features.
* ``piecewise``: axis-aligned steps over the dominant work feature.
* ``smooth``: a low-degree polynomial of work (FLOPs) and memory traffic.

Noise is multiplicative log-normal, so latencies stay positive.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .features import SCHEMAS, FeatureVector, extract_features
from .gpu_compile import GpuInfo, KernelKind
from .graph import ComputationalGraph
from .latency import kernels_for
from .measurements import ArchitectureMeasurement, MeasurementSet
from .predictors.cv import derive_seed
from .scenario import ScenarioKey

ORACLE_KINDS = ("linear", "piecewise", "smooth")

# ms per unit of each feature; other features get weight 0.
DEFAULT_LINEAR_WEIGHTS = {
    "flops": 5e-9,
    "input_size": 2e-6,
    "output_size": 3e-6,
    "kernel_size": 1e-6,
    "parameter_size": 1e-6,
    "padding_size": 1e-6,
}

WORK_SCALE = 1e8      # FLOPs
MEMORY_SCALE = 1e5    # elements
PIECEWISE_EDGES = (1e4, 1e5, 1e6, 1e7, 1e8)
PIECEWISE_LEVELS = (0.02, 0.1, 0.4, 1.5, 5.0, 20.0)


def _work(values: Mapping[str, float]) -> float:
    if "flops" in values:
        return values["flops"]
    return values.get("output_size", values["input_size"])


def _memory(values: Mapping[str, float]) -> float:
    return values.get("input_size", 0.0) + values.get("output_size", 0.0)


@dataclass(frozen=True)
class OracleSpec:
    kind: str = "linear"
    noise: float = 0.0
    seed: int = 0
    overhead_ms: float = 0.0
    # Per-kind overrides for the linear family: kind -> {feature name: ms per unit}.
    weights: Mapping[KernelKind, Mapping[str, float]] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ORACLE_KINDS:
            raise ValueError(f"oracle kind must be one of {ORACLE_KINDS}, got {self.kind!r}")
        if not self.noise >= 0:
            raise ValueError("noise must be nonnegative")
        for kind, w in self.weights.items():
            unknown = set(w) - set(SCHEMAS[kind])
            if unknown:
                raise ValueError(f"{kind.value} has no feature(s) {sorted(unknown)}")
            if any(v < 0 for v in w.values()):
                raise ValueError("linear oracle weights must be nonnegative")
            if not any(v > 0 for v in w.values()):
                raise ValueError(f"{kind.value} weights are all zero; latencies would not be positive")

    def weight_vector(self, kind: KernelKind) -> np.ndarray:
        w = self.weights.get(kind, DEFAULT_LINEAR_WEIGHTS)
        return np.array([w.get(name, 0.0) for name in SCHEMAS[kind]])

    def latency(self, fv: FeatureVector) -> float:
        """Noise-free latency (ms) of one kernel."""
        v = fv.as_dict()
        if self.kind == "linear":
            ms = float(np.dot(self.weight_vector(fv.kind), fv.values))
        elif self.kind == "piecewise":
            ms = PIECEWISE_LEVELS[int(np.searchsorted(PIECEWISE_EDGES, _work(v), side="right"))]
        else:
            f = _work(v) / WORK_SCALE
            m = _memory(v) / MEMORY_SCALE
            ms = 0.02 + 0.5 * f + 0.1 * f * f + 0.05 * m + 0.02 * f * m
        if not ms > 0:
            raise ValueError(f"oracle gives nonpositive latency {ms} for a {fv.kind.value} kernel")
        return ms


def generate_dataset(
    graphs: Sequence[ComputationalGraph],
    scenario: ScenarioKey,
    oracle: OracleSpec,
    *,
    gpu: Optional[GpuInfo] = None,
    fusion: bool = True,
    graph_refs: Optional[Sequence[str]] = None,
) -> MeasurementSet:
    """Per-kernel oracle latencies and end-to-end = sum + ``oracle.overhead_ms``."""
    refs = list(graph_refs) if graph_refs is not None else [f"arch_{i:04d}.json" for i in range(len(graphs))]
    if len(refs) != len(graphs):
        raise ValueError("graph_refs and graphs differ in length")
    archs = []
    for i, (graph, ref) in enumerate(zip(graphs, refs)):
        rng = np.random.default_rng(derive_seed(oracle.seed, "graph", i))
        kernels = []
        for k in kernels_for(graph, scenario, gpu, fusion).kernels:
            ms = oracle.latency(extract_features(k, graph))
            if oracle.noise > 0:
                ms *= float(np.exp(oracle.noise * rng.standard_normal()))
            kernels.append((k.base_node, ms))
        total = oracle.overhead_ms + sum(ms for _, ms in kernels)
        archs.append(ArchitectureMeasurement(ref, total, tuple(kernels)))
    gpu_name = None if gpu is None else gpu.vendor_class.value
    return MeasurementSet(scenario, tuple(archs), gpu_name)


def kernel_dataset(
    graphs: Sequence[ComputationalGraph],
    kind: KernelKind,
    oracle: OracleSpec,
    scenario: ScenarioKey,
    gpu: Optional[GpuInfo] = None,
    limit: Optional[int] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Raw feature matrix and oracle latencies for all kernels of one kind."""
    ms = generate_dataset(graphs, scenario, oracle, gpu=gpu)
    X, y = [], []
    for graph, arch in zip(graphs, ms.architectures):
        lat = arch.kernel_ms
        for k in kernels_for(graph, scenario, gpu).kernels:
            if k.kind is kind:
                X.append(extract_features(k, graph).values)
                y.append(lat[k.base_node])
    X = np.asarray(X, dtype=float).reshape(-1, len(SCHEMAS[kind]))
    y = np.asarray(y, dtype=float)
    if limit is not None:
        X, y = X[:limit], y[:limit]
    return X, y
