"""End-to-end latency: per-kernel predictions plus a per-scenario framework overhead."""
from __future__ import annotations

import logging
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .features import extract_features, fit_standardizer_matrix
from .gpu_compile import GpuInfo, KernelKind, KernelSequence, compile_graph, cpu_kernels
from .graph import ComputationalGraph
from .measurements import ArchitectureMeasurement, MeasurementSet
from .predictors import mape, train
from .predictors.bundle import BundleEntry, PredictorBundle
from .predictors.cv import derive_seed
from .scenario import ScenarioKey

log = logging.getLogger(__name__)


class MeasurementError(ValueError):
    pass


@dataclass(frozen=True)
class KernelLatency:
    id: str
    kind: KernelKind
    ms: float


@dataclass(frozen=True)
class LatencyPrediction:
    scenario: ScenarioKey
    total_ms: float
    overhead_ms: float
    per_kernel: tuple[KernelLatency, ...]

    def to_dict(self) -> dict:
        return {
            "scenario": str(self.scenario),
            "total_ms": self.total_ms,
            "overhead_ms": self.overhead_ms,
            "kernels": [{"id": k.id, "kind": k.kind.value, "ms": k.ms} for k in self.per_kernel],
        }


def estimate_overhead(measured: Sequence[tuple[float, Sequence[float]]]) -> float:
    """Mean over architectures of (end-to-end latency - sum of per-kernel latencies)."""
    if not measured:
        raise ValueError("need at least one measured architecture")
    return float(np.mean([e2e - sum(ops) for e2e, ops in measured]))


def kernels_for(
    graph: ComputationalGraph,
    scenario: ScenarioKey,
    gpu: Optional[GpuInfo] = None,
    fusion: bool = True,
) -> KernelSequence:
    """GPU scenarios get fused and selected kernels; CPUs run operations as-is."""
    if scenario.is_gpu:
        if gpu is None:
            raise ValueError(f"scenario {scenario} needs GPU information")
        return compile_graph(graph, gpu, fusion=fusion)
    if gpu is not None:
        raise ValueError(f"scenario {scenario} is a CPU scenario; GPU information does not apply")
    return cpu_kernels(graph)


def predict_end_to_end(
    graph: ComputationalGraph,
    scenario: ScenarioKey,
    bundle: PredictorBundle,
    gpu: Optional[GpuInfo] = None,
    fusion: bool = True,
) -> LatencyPrediction:
    seq = kernels_for(graph, scenario, gpu, fusion)
    rows = []
    for k in seq.kernels:
        entry = bundle.entry(scenario, k.kind)
        rows.append(KernelLatency(k.base_node, k.kind, entry.predict(extract_features(k, graph))))
    overhead = float(bundle.overhead.get(scenario, 0.0))
    total = overhead + sum(r.ms for r in rows)
    return LatencyPrediction(scenario, total, overhead, tuple(rows))


# ---------------------------------------------------------------------------
# Training and evaluation from measurement files
# ---------------------------------------------------------------------------

@dataclass
class TrainingData:
    rows: dict[KernelKind, list]
    targets: dict[KernelKind, list]
    overhead_pairs: list


def collect_training_data(
    measurements: MeasurementSet,
    graphs: Mapping[str, ComputationalGraph],
    gpu: Optional[GpuInfo] = None,
    fusion: bool = True,
) -> TrainingData:
    """Pair every deduced kernel with its measured latency.

    Raises MeasurementError when a kernel of a referenced graph has no
    measurement or a latency is not positive.
    """
    rows: dict[KernelKind, list] = defaultdict(list)
    targets: dict[KernelKind, list] = defaultdict(list)
    pairs = []
    for arch in measurements.architectures:
        try:
            graph = graphs[arch.graph_ref]
        except KeyError:
            raise MeasurementError(f"no graph for {arch.graph_ref!r}") from None
        seq = kernels_for(graph, measurements.scenario, gpu, fusion)
        measured = arch.kernel_ms
        ops = []
        for k in seq.kernels:
            if k.base_node not in measured:
                raise MeasurementError(
                    f"{arch.graph_ref}: kernel {k.base_node} ({k.kind.value}) has no measurement")
            ms = measured[k.base_node]
            if not ms > 0:
                raise MeasurementError(f"{arch.graph_ref}: kernel {k.base_node} latency must be positive")
            rows[k.kind].append(extract_features(k, graph).values)
            targets[k.kind].append(ms)
            ops.append(ms)
        pairs.append((arch.end_to_end_ms, ops))
    return TrainingData(dict(rows), dict(targets), pairs)


def _fit_one(args):
    kind, X, y, algo, seed, options = args
    std = fit_standardizer_matrix(X, kind)
    Xs = std.transform_matrix(X)
    model = train(algo, Xs, y, seed=seed, **options)
    return kind, BundleEntry(std, model), mape(model.predict(Xs), y)


def train_bundle(
    measurements: MeasurementSet,
    graphs: Mapping[str, ComputationalGraph],
    algo: str = "lasso",
    *,
    seed: int = 0,
    gpu: Optional[GpuInfo] = None,
    fusion: bool = True,
    jobs: int = 1,
    options: Optional[dict] = None,
) -> tuple[PredictorBundle, dict]:
    """Train one predictor per kernel kind for the scenario of ``measurements``.

    Each task's seed derives from (seed, scenario, kind), so results do not
    depend on ``jobs``.  Returns the bundle and a per-kind report.
    """
    if not measurements.architectures:
        raise MeasurementError("measurement file has no architectures")
    data = collect_training_data(measurements, graphs, gpu, fusion)
    scenario = measurements.scenario
    tasks = [
        (kind, np.asarray(data.rows[kind], dtype=float), np.asarray(data.targets[kind], dtype=float),
         algo, derive_seed(seed, scenario, kind.value), options or {})
        for kind in sorted(data.rows, key=lambda k: k.value)
    ]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_fit_one, tasks))
    else:
        results = [_fit_one(t) for t in tasks]

    bundle = PredictorBundle()
    report = {}
    for (kind, entry, train_mape), task in zip(results, tasks):
        bundle.add(scenario, kind, entry)
        report[kind.value] = {"n": len(task[2]), "cv_mape": entry.model.cv_mape, "train_mape": train_mape}
        log.info("trained %s %s on %d kernels, CV MAPE %s", algo, kind.value, len(task[2]), entry.model.cv_mape)
    bundle.overhead[scenario] = estimate_overhead(data.overhead_pairs)
    return bundle, report


def evaluate(
    bundle: PredictorBundle,
    scenario: ScenarioKey,
    cases: Sequence[tuple[ComputationalGraph, ArchitectureMeasurement]],
    gpu: Optional[GpuInfo] = None,
    fusion: bool = True,
) -> dict:
    """End-to-end MAPE over architectures and per-kind MAPE over measured kernels."""
    if not cases:
        raise ValueError("empty test set")
    predicted, actual = [], []
    by_kind: dict[KernelKind, tuple[list, list]] = defaultdict(lambda: ([], []))
    for graph, meas in cases:
        pred = predict_end_to_end(graph, scenario, bundle, gpu, fusion)
        predicted.append(pred.total_ms)
        actual.append(meas.end_to_end_ms)
        measured = meas.kernel_ms
        for k in pred.per_kernel:
            if k.id in measured:
                by_kind[k.kind][0].append(k.ms)
                by_kind[k.kind][1].append(measured[k.id])
    return {
        "scenario": str(scenario),
        "architectures": len(cases),
        "end_to_end_mape": mape(predicted, actual),
        "per_kind_mape": {kind.value: mape(p, a) for kind, (p, a) in sorted(by_kind.items(), key=lambda kv: kv[0].value)},
        "per_kind_count": {kind.value: len(p) for kind, (p, _) in sorted(by_kind.items(), key=lambda kv: kv[0].value)},
    }
