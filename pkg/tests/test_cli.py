import json

import pytest

from mobilat.cli import main
from mobilat.gpu_compile import KernelKind
from mobilat.predictors.bundle import PredictorBundle, constant_entry
from mobilat.scenario import ScenarioKey

from helpers import conv, doc, relu


def run(*argv):
    try:
        return main(["-q", *map(str, argv)])
    except SystemExit as exc:
        return exc.code


@pytest.fixture
def conv_relu(tmp_path):
    path = tmp_path / "g.json"
    path.write_text(json.dumps(doc([conv("c", "x", "t", filters=64), relu("r", "t", "y")])))
    return path


@pytest.fixture(scope="module")
def nas_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("nas")
    assert main(["-q", "sample-nas", "--count", "12", "--seed", "3", "-o", str(d)]) == 0
    return d


def test_compile_fused_and_unfused(conv_relu, capsys):
    assert run("compile", conv_relu, "--gpu", "other") == 0
    out = json.loads(capsys.readouterr().out)
    assert out["summary"] == {"node_count": 2, "kernel_count": 1}
    assert out["kernels"] == [{"base": "c", "kind": "winograd", "linked": ["r"]}]
    assert run("compile", conv_relu, "--gpu", "other", "--no-fusion") == 0
    assert json.loads(capsys.readouterr().out)["summary"]["kernel_count"] == 2


def test_compile_errors(conv_relu, tmp_path, capsys):
    assert run("compile", conv_relu, "--gpu", "voodoo") == 2
    assert run("compile", conv_relu) == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{"tensors": {}, "nodes": [], "inputs": ["nope"], "outputs": []}')
    assert run("compile", bad, "--gpu", "other") == 1
    assert run("compile", tmp_path / "missing.json", "--gpu", "other") == 1
    capsys.readouterr()


def test_features_csv(conv_relu, capsys):
    assert run("features", conv_relu, "--kind", "conv2d") == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("id,input_h,input_w")
    assert lines[1].endswith(",231211008")


def test_sample_nas_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("sample-nas", "--count", 3, "--seed", 7, "-o", a) == 0
    assert run("sample-nas", "--count", 3, "--seed", 7, "-o", b) == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == ["arch_0000.json", "arch_0001.json", "arch_0002.json", "manifest.json"]
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes()
    manifest = json.loads((a / "manifest.json").read_text())
    assert manifest["seed"] == 7 and manifest["count"] == 3


def test_train_predict_eval_pipeline(nas_dir, tmp_path, capsys):
    meas = tmp_path / "m.json"
    bundle = tmp_path / "b.json"
    assert run("gen-data", nas_dir, "--scenario", "p:cpu:1L", "--overhead", 2, "-o", meas) == 0
    assert run("train", meas, nas_dir, "--algo", "lasso", "-o", bundle) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["overhead_ms"] == pytest.approx(2.0)
    # Kinds with a handful of kernels cannot support 5-fold alpha selection.
    assert all(r["train_mape"] < 0.005 for r in report["kinds"].values() if r["n"] >= 10)

    assert run("predict", nas_dir / "arch_0000.json", bundle, "--scenario", "p:cpu:1L") == 0
    pred = json.loads(capsys.readouterr().out)
    assert pred["total_ms"] == pytest.approx(pred["overhead_ms"] + sum(k["ms"] for k in pred["kernels"]))

    assert run("eval", bundle, meas, nas_dir) == 0
    ev = json.loads(capsys.readouterr().out)
    assert ev["end_to_end_mape"] < 0.01
    assert ev["architectures"] == 12


def test_gpu_pipeline_and_merge(nas_dir, tmp_path, capsys):
    cpu_m, gpu_m = tmp_path / "c.json", tmp_path / "g.json"
    cpu_b, both = tmp_path / "cb.json", tmp_path / "both.json"
    assert run("gen-data", nas_dir, "--scenario", "p:cpu:1L", "-o", cpu_m) == 0
    assert run("gen-data", nas_dir, "--scenario", "p:gpu", "--gpu", "adreno6xx", "-o", gpu_m) == 0
    assert run("train", cpu_m, nas_dir, "-o", cpu_b) == 0
    # The GPU class is read from the measurement file.
    assert run("train", gpu_m, nas_dir, "--merge", cpu_b, "-o", both) == 0
    capsys.readouterr()
    scenarios = [str(s) for s in PredictorBundle.load(both).scenarios]
    assert scenarios == ["p:cpu:1L:f32", "p:gpu::f32"]

    g = nas_dir / "arch_0001.json"
    assert run("predict", g, both, "--scenario", "p:gpu", "--gpu", "adreno6xx") == 0
    gpu_rows = len(json.loads(capsys.readouterr().out)["kernels"])
    assert run("predict", g, both, "--scenario", "p:cpu:1L") == 0
    cpu_rows = len(json.loads(capsys.readouterr().out)["kernels"])
    assert gpu_rows < cpu_rows
    assert run("predict", g, both, "--scenario", "p:gpu") == 2


def test_predict_constant_bundle(tmp_path, capsys):
    nodes = [conv("c1", "x", "a"), relu("r1", "a", "b"), conv("c2", "b", "c"),
             relu("r2", "c", "d"), conv("c3", "d", "y")]
    g = tmp_path / "g.json"
    g.write_text(json.dumps(doc(nodes)))
    s = ScenarioKey("p", "cpu", "1L")
    b = PredictorBundle()
    for kind in (KernelKind.CONV2D, KernelKind.ELEMENTWISE):
        b.add(s, kind, constant_entry(kind, 1.0))
    b.overhead[s] = 2.0
    b.save(tmp_path / "b.json")
    assert run("predict", g, tmp_path / "b.json", "--scenario", "p:cpu:1L") == 0
    assert json.loads(capsys.readouterr().out)["total_ms"] == 7.0
    assert run("predict", g, tmp_path / "b.json", "--scenario", "q:cpu:1L") == 1


def test_train_errors(nas_dir, tmp_path, capsys):
    empty = tmp_path / "empty.json"
    empty.write_text('{"scenario": "p:cpu:1L", "architectures": []}')
    assert run("train", empty, nas_dir, "-o", tmp_path / "b.json") == 1
    assert run("train", empty, nas_dir, "--algo", "mlp", "-o", tmp_path / "b.json") == 2
    capsys.readouterr()


def test_config_file_and_env(nas_dir, tmp_path, monkeypatch, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 5, "gpu": "other", "fusion": False}))
    g = nas_dir / "arch_0000.json"
    monkeypatch.setenv("MOBILAT_CONFIG", str(cfg))
    assert main(["compile", str(g)]) == 0
    captured = capsys.readouterr()
    out = json.loads(captured.out)
    assert out["gpu"] == "other"
    assert out["summary"]["kernel_count"] == out["summary"]["node_count"]
    assert '"seed": 5' in captured.err
    cfg.write_text(json.dumps({"colour": "blue"}))
    assert run("compile", g) == 2
