import numpy as np
import pytest

from mobilat.gpu_compile import GpuInfo, KernelKind, VendorClass
from mobilat.graph import ComputationalGraph, TensorShape
from mobilat.latency import (
    MeasurementError,
    estimate_overhead,
    evaluate,
    kernels_for,
    predict_end_to_end,
    train_bundle,
)
from mobilat.measurements import ArchitectureMeasurement, MeasurementSet
from mobilat.nas import sample_graphs
from mobilat.oracle import OracleSpec, generate_dataset
from mobilat.predictors.bundle import MissingPredictorError, PredictorBundle, constant_entry
from mobilat.scenario import ScenarioKey

from helpers import build, conv, ew, relu

CPU = ScenarioKey("pixel4", "cpu", "1L")
GPU = ScenarioKey("pixel4", "gpu")
OTHER = GpuInfo(VendorClass.OTHER)


def constant_bundle(scenario, value=1.0, overhead=None, kinds=KernelKind):
    b = PredictorBundle()
    for kind in kinds:
        b.add(scenario, kind, constant_entry(kind, value))
    if overhead is not None:
        b.overhead[scenario] = overhead
    return b


@pytest.mark.parametrize("pairs, expected", [
    ([(100, [40, 50]), (110, [98])], 11.0),
    ([(50, [50])], 0.0),
    ([(10, [12]), (14, [10])], 1.0),
])
def test_estimate_overhead(pairs, expected):
    assert estimate_overhead(pairs) == pytest.approx(expected)


def test_estimate_overhead_empty():
    with pytest.raises(ValueError):
        estimate_overhead([])


def test_total_is_overhead_plus_kernels():
    g = build([conv("c", "x", "a"), ew("n", "NEG", ["a"], "b"), conv("d", "b", "y")])
    b = PredictorBundle()
    b.add(CPU, KernelKind.CONV2D, constant_entry(KernelKind.CONV2D, 10.0))
    b.add(CPU, KernelKind.ELEMENTWISE, constant_entry(KernelKind.ELEMENTWISE, 5.0))
    b.overhead[CPU] = 2.0
    pred = predict_end_to_end(g, CPU, b)
    assert [k.ms for k in pred.per_kernel] == [10.0, 5.0, 10.0]
    assert pred.total_ms == 27.0


def test_three_ops_example():
    g = build([conv("c", "x", "a"), relu("r", "a", "b"), ew("n", "NEG", ["b"], "y")])
    b = PredictorBundle()
    b.add(CPU, KernelKind.CONV2D, constant_entry(KernelKind.CONV2D, 10.0))
    b.add(CPU, KernelKind.ELEMENTWISE, constant_entry(KernelKind.ELEMENTWISE, 20.0))
    b.overhead[CPU] = 2.0
    pred = predict_end_to_end(g, CPU, b)
    assert pred.total_ms == 10 + 20 + 20 + 2


def test_empty_graph_is_overhead():
    g = ComputationalGraph({"x": TensorShape(1, 1, 1)}, (), ("x",), ("x",))
    pred = predict_end_to_end(g, CPU, constant_bundle(CPU, overhead=3.5))
    assert pred.total_ms == 3.5 and pred.per_kernel == ()


def test_five_kernel_graph_constant_predictors():
    nodes = [conv("c1", "x", "a"), relu("r1", "a", "b"), conv("c2", "b", "c"),
             relu("r2", "c", "d"), conv("c3", "d", "y")]
    g = build(nodes)
    assert predict_end_to_end(g, CPU, constant_bundle(CPU, overhead=2.0)).total_ms == 7.0


def test_gpu_path_fuses():
    g = build([conv("c", "x", "a", filters=64), relu("r", "a", "y")])
    cpu = predict_end_to_end(g, CPU, constant_bundle(CPU))
    gpu = predict_end_to_end(g, GPU, constant_bundle(GPU), gpu=OTHER)
    assert len(gpu.per_kernel) == len(cpu.per_kernel) - 1
    assert gpu.per_kernel[0].kind is KernelKind.WINOGRAD


def test_gpu_info_required_and_rejected():
    g = build([conv("c", "x", "y")])
    with pytest.raises(ValueError):
        kernels_for(g, GPU)
    with pytest.raises(ValueError):
        kernels_for(g, CPU, OTHER)


def test_missing_kind_raises():
    g = build([conv("c", "x", "y")])
    b = constant_bundle(CPU, kinds=[KernelKind.ELEMENTWISE])
    with pytest.raises(MissingPredictorError):
        predict_end_to_end(g, CPU, b)


def test_scenario_isolation():
    g = build([conv("c", "x", "a"), relu("r", "a", "y")])
    other = ScenarioKey("pixel4", "cpu", "4S")
    b = constant_bundle(CPU, 1.0, overhead=1.0)
    before = predict_end_to_end(g, CPU, b)
    b = b.merge(constant_bundle(other, 50.0, overhead=9.0))
    assert predict_end_to_end(g, CPU, b) == before
    assert predict_end_to_end(g, other, b).total_ms == 109.0


def test_identity_on_random_bundles():
    rng = np.random.default_rng(0)
    graphs = sample_graphs(5, 31)
    for i in range(20):
        b = PredictorBundle()
        for kind in KernelKind:
            b.add(CPU, kind, constant_entry(kind, float(rng.uniform(0.01, 5))))
        b.overhead[CPU] = float(rng.uniform(-1, 5))
        pred = predict_end_to_end(graphs[i % 5], CPU, b)
        assert pred.total_ms == pred.overhead_ms + sum(k.ms for k in pred.per_kernel)


def _fixture():
    g = build([conv("c1", "x", "a"), relu("r1", "a", "b"), conv("c2", "b", "c"),
               ew("n", "NEG", ["c"], "d"), conv("c3", "d", "y", k=5)])
    b = PredictorBundle()
    b.add(CPU, KernelKind.CONV2D, constant_entry(KernelKind.CONV2D, 10.0))
    b.add(CPU, KernelKind.ELEMENTWISE, constant_entry(KernelKind.ELEMENTWISE, 1.0))
    b.overhead[CPU] = 0.5
    return g, b


def test_eval_perfect_predictions():
    g, b = _fixture()
    meas = ArchitectureMeasurement("g", 32.5, (("c1", 10.0), ("r1", 1.0), ("c2", 10.0), ("n", 1.0), ("c3", 10.0)))
    report = evaluate(b, CPU, [(g, meas)])
    assert report["end_to_end_mape"] == 0
    assert all(v == 0 for v in report["per_kind_mape"].values())


def test_eval_regroups_per_kind():
    g, b = _fixture()
    measured = {"c1": 8.0, "r1": 2.0, "c2": 10.0, "n": 0.5, "c3": 12.5}
    meas = ArchitectureMeasurement("g", 30.5, tuple(measured.items()))
    report = evaluate(b, CPU, [(g, meas)])
    # By hand: conv rows |10-8|/8, 0, |10-12.5|/12.5; elementwise |1-2|/2, |1-0.5|/0.5.
    assert report["per_kind_mape"]["conv2d"] == pytest.approx((0.25 + 0 + 0.2) / 3)
    assert report["per_kind_mape"]["elementwise"] == pytest.approx((0.5 + 1.0) / 2)
    assert report["per_kind_count"] == {"conv2d": 3, "elementwise": 2}
    assert report["end_to_end_mape"] == pytest.approx(abs(32.5 - 30.5) / 30.5)


def test_eval_one_architecture_ten_percent():
    g, b = _fixture()
    report = evaluate(b, CPU, [(g, ArchitectureMeasurement("g", 32.5 / 1.1))])
    assert report["end_to_end_mape"] == pytest.approx(0.10)


def test_train_bundle_recovers_overhead_and_is_job_independent():
    graphs = sample_graphs(12, 5)
    refs = [f"g{i}.json" for i in range(12)]
    ms = generate_dataset(graphs, CPU, OracleSpec("linear", overhead_ms=4.0), graph_refs=refs)
    lookup = dict(zip(refs, graphs))
    b1, r1 = train_bundle(ms, lookup, "lasso", seed=3)
    b2, r2 = train_bundle(ms, lookup, "lasso", seed=3, jobs=2)
    assert b1.to_dict() == b2.to_dict()
    assert b1.overhead[CPU] == pytest.approx(4.0, abs=1e-9)
    assert all(r["train_mape"] < 0.005 for r in r1.values())


def test_train_bundle_errors():
    graphs = sample_graphs(2, 5)
    ms = generate_dataset(graphs, CPU, OracleSpec("linear"))
    with pytest.raises(MeasurementError):
        train_bundle(MeasurementSet(CPU, ()), {}, "lasso")
    with pytest.raises(MeasurementError, match="no graph"):
        train_bundle(ms, {}, "lasso")
    first = ms.architectures[0]
    short = MeasurementSet(CPU, (ArchitectureMeasurement(first.graph_ref, first.end_to_end_ms, first.kernels[1:]),))
    with pytest.raises(MeasurementError, match="has no measurement"):
        train_bundle(short, {first.graph_ref: graphs[0]}, "lasso")


def test_measurement_round_trip(tmp_path):
    ms = generate_dataset(sample_graphs(2, 1), GPU, OracleSpec("smooth", noise=0.1, seed=2), gpu=OTHER)
    ms.save(tmp_path / "m.json")
    assert MeasurementSet.load(tmp_path / "m.json") == ms


def test_scenario_parse():
    assert ScenarioKey.parse("pixel4:cpu:1L+3M:i8") == ScenarioKey("pixel4", "cpu", "1L+3M", "i8")
    assert str(ScenarioKey.parse("pixel4:gpu")) == "pixel4:gpu::f32"
    for bad in ("pixel4:gpu::i8", "pixel4:npu", "x", "pixel4:gpu:1L"):
        with pytest.raises(ValueError):
            ScenarioKey.parse(bad)
