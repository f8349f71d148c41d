"""``mobilat`` command line: compile, features, sample-nas, gen-data, train, predict, eval.

Reports go to stdout (or ``-o``) as JSON; human-readable tables and the
resolved configuration go to stderr.  Exit codes: 0 success, 1 data or
contract error, 2 usage error.

Defaults for ``seed``, ``algo``, ``gpu``, ``fusion``, ``folds``, ``jobs`` and
``train_options`` can come from a JSON file named by ``--config`` or the
``MOBILAT_CONFIG`` environment variable; command-line flags win.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from collections import Counter, defaultdict
from pathlib import Path

from .features import extract_features, features_csv
from .gpu_compile import GpuInfo, KernelKind
from .graph import GraphError, infer_shapes, load_graph, serialize_graph
from .latency import MeasurementError, evaluate, kernels_for, predict_end_to_end, train_bundle
from .measurements import MeasurementSet
from .nas import lower_to_graph, sample_architecture
from .oracle import ORACLE_KINDS, OracleSpec, generate_dataset
from .predictors import ALGORITHMS
from .predictors.bundle import MissingPredictorError, PredictorBundle
from .predictors.cv import derive_seed
from .scenario import ScenarioKey

log = logging.getLogger("mobilat")

CONFIG_ENV = "MOBILAT_CONFIG"
CONFIG_KEYS = ("seed", "algo", "gpu", "fusion", "folds", "jobs", "train_options")
MANIFEST = "manifest.json"


class UsageError(Exception):
    """Bad combination of otherwise well-formed arguments (exit 2)."""


def _gpu_arg(text: str) -> GpuInfo:
    try:
        return GpuInfo.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _scenario_arg(text: str) -> ScenarioKey:
    try:
        return ScenarioKey.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _load_config(path) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    unknown = set(cfg) - set(CONFIG_KEYS)
    if unknown:
        raise UsageError(f"config {path} has unknown key(s) {sorted(unknown)}")
    if cfg.get("gpu") is not None:
        cfg["gpu"] = _gpu_arg(cfg["gpu"])
    return cfg


def _write(text: str, out) -> None:
    if out is None or out == "-":
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        Path(out).write_text(text, encoding="utf-8")


def _dump(obj, out) -> None:
    _write(json.dumps(obj, indent=1), out)


def _read_graph(path):
    return infer_shapes(load_graph(path))


def _load_graph_dir(directory) -> dict:
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"graph directory {d} does not exist")
    graphs = {p.name: _read_graph(p) for p in sorted(d.glob("*.json")) if p.name != MANIFEST}
    if not graphs:
        raise MeasurementError(f"no graph files in {d}")
    return graphs


def _gpu_for(scenario: ScenarioKey, gpu):
    """GPU info is mandatory for GPU scenarios and meaningless for CPU ones."""
    if scenario.is_gpu and gpu is None:
        raise UsageError(f"scenario {scenario} is a GPU scenario; pass --gpu")
    if not scenario.is_gpu and gpu is not None:
        raise UsageError(f"scenario {scenario} is a CPU scenario; drop --gpu")
    return gpu


def _measurement_gpu(ms: MeasurementSet, gpu):
    if gpu is None and ms.gpu is not None:
        gpu = GpuInfo.parse(ms.gpu)
    return _gpu_for(ms.scenario, gpu)


def _table(title: str, header, rows) -> None:
    widths = [max(len(str(h)), *(len(str(r[i])) for r in rows)) if rows else len(str(h))
              for i, h in enumerate(header)]
    print(title, file=sys.stderr)
    print("  ".join(str(h).ljust(w) for h, w in zip(header, widths)), file=sys.stderr)
    for r in rows:
        print("  ".join(str(c).ljust(w) for c, w in zip(r, widths)), file=sys.stderr)


def _pct(v) -> str:
    return "-" if v is None else f"{100 * v:.3f}%"


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_compile(args) -> int:
    if args.gpu is None:
        raise UsageError("compile needs --gpu")
    graph = _read_graph(args.graph)
    seq = kernels_for(graph, ScenarioKey("any", "gpu"), args.gpu, args.fusion)
    s = seq.to_dict()
    log.info("%d nodes -> %d kernels", s["summary"]["node_count"], s["summary"]["kernel_count"])
    _dump(s, args.output)
    return 0


def cmd_features(args) -> int:
    graph = _read_graph(args.graph)
    scenario = ScenarioKey("any", "gpu") if args.gpu is not None else ScenarioKey("any", "cpu")
    rows = defaultdict(list)
    for k in kernels_for(graph, scenario, args.gpu, args.fusion).kernels:
        rows[k.kind].append((k.base_node, extract_features(k, graph)))
    if args.kind is not None:
        _write(features_csv(rows.get(args.kind, []), args.kind), args.output)
        return 0
    if args.output not in (None, "-"):
        out = Path(args.output)
        out.mkdir(parents=True, exist_ok=True)
        for kind, r in sorted(rows.items(), key=lambda kv: kv[0].value):
            (out / f"{kind.value}.csv").write_text(features_csv(r, kind), encoding="utf-8")
        return 0
    # One CSV block per kind on stdout, blank-line separated.
    blocks = [f"# {kind.value}\n" + features_csv(r, kind)
              for kind, r in sorted(rows.items(), key=lambda kv: kv[0].value)]
    _write("\n".join(blocks), None)
    return 0


def cmd_sample_nas(args) -> int:
    if args.count < 0:
        raise UsageError("--count must be nonnegative")
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    block_counts = Counter()
    for i in range(args.count):
        arch = sample_architecture(derive_seed(args.seed, "arch", i), tuple(args.resolution))
        block_counts.update(type(b).__name__ for b in arch.blocks)
        name = f"arch_{i:04d}.json"
        (out / name).write_text(serialize_graph(lower_to_graph(arch)), encoding="utf-8")
        files.append(name)
    manifest = {"seed": args.seed, "count": args.count, "resolution": list(args.resolution),
                "files": files, "block_counts": dict(sorted(block_counts.items()))}
    (out / MANIFEST).write_text(json.dumps(manifest, indent=1), encoding="utf-8")
    log.info("wrote %d graphs to %s", args.count, out)
    return 0


def cmd_gen_data(args) -> int:
    gpu = _gpu_for(args.scenario, args.gpu)
    graphs = _load_graph_dir(args.graphs)
    oracle = OracleSpec(args.oracle, args.noise, args.seed, args.overhead)
    ms = generate_dataset(list(graphs.values()), args.scenario, oracle, gpu=gpu,
                          fusion=args.fusion, graph_refs=list(graphs))
    _write(json.dumps(ms.to_dict(), indent=1), args.output)
    log.info("generated %d architectures for %s", len(ms.architectures), args.scenario)
    return 0


def cmd_train(args) -> int:
    ms = MeasurementSet.load(args.measurements)
    if args.scenario is not None and args.scenario != ms.scenario:
        raise MeasurementError(f"--scenario {args.scenario} does not match the measurement file ({ms.scenario})")
    gpu = _measurement_gpu(ms, args.gpu)
    graphs = _load_graph_dir(args.graphs)
    options = dict(args.train_options or {})
    if args.folds is not None:
        options["folds"] = args.folds
    bundle, report = train_bundle(ms, graphs, args.algo, seed=args.seed, gpu=gpu,
                                  fusion=args.fusion, jobs=args.jobs, options=options)
    if args.merge:
        bundle = PredictorBundle.load(args.merge).merge(bundle)
    bundle.save(args.output)
    _table(f"{args.algo} predictors for {ms.scenario}", ("kind", "n", "cv_mape", "train_mape"),
           [(k, r["n"], _pct(r["cv_mape"]), _pct(r["train_mape"])) for k, r in report.items()])
    _dump({"scenario": str(ms.scenario), "algo": args.algo, "bundle": str(args.output),
           "overhead_ms": bundle.overhead[ms.scenario], "kinds": report}, None)
    return 0


def cmd_predict(args) -> int:
    gpu = _gpu_for(args.scenario, args.gpu)
    bundle = PredictorBundle.load(args.bundle)
    graph = _read_graph(args.graph)
    pred = predict_end_to_end(graph, args.scenario, bundle, gpu, args.fusion)
    _dump(pred.to_dict(), args.output)
    return 0


def cmd_eval(args) -> int:
    bundle = PredictorBundle.load(args.bundle)
    ms = MeasurementSet.load(args.measurements)
    gpu = _measurement_gpu(ms, args.gpu)
    graphs = _load_graph_dir(args.graphs)
    if not ms.architectures:
        raise MeasurementError("measurement file has no architectures")
    try:
        cases = [(graphs[a.graph_ref], a) for a in ms.architectures]
    except KeyError as exc:
        raise MeasurementError(f"no graph for {exc.args[0]!r}") from None
    report = evaluate(bundle, ms.scenario, cases, gpu, args.fusion)
    _table(f"evaluation on {ms.scenario}: end-to-end MAPE {_pct(report['end_to_end_mape'])}",
           ("kind", "kernels", "mape"),
           [(k, report["per_kind_count"][k], _pct(v)) for k, v in report["per_kind_mape"].items()])
    _dump(report, args.output)
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mobilat", description="Kernel-level latency prediction for mobile CPUs and GPUs.")
    p.add_argument("--config", default=os.environ.get(CONFIG_ENV),
                   help=f"JSON config with defaults (env {CONFIG_ENV})")
    p.add_argument("-q", "--quiet", action="store_true", help="only log warnings")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, gpu=True, fusion=True):
        sp.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
        if gpu:
            sp.add_argument("--gpu", type=_gpu_arg, default=None,
                            help="GPU vendor class (adreno6xx, adreno, amd, other) or model name")
        if fusion:
            sp.add_argument("--no-fusion", dest="fusion", action="store_false", default=None,
                            help="compile GPU kernels without fusion")
        sp.add_argument("-o", "--output", default=None)
        return sp

    sp = common(sub.add_parser("compile", help="deduce the GPU kernel sequence of a graph"))
    sp.add_argument("graph")
    sp.set_defaults(func=cmd_compile)

    sp = common(sub.add_parser("features", help="dump per-kernel features as CSV"))
    sp.add_argument("graph")
    sp.add_argument("--kind", type=KernelKind, choices=list(KernelKind), default=None,
                    metavar="KIND", help="only this kernel kind")
    sp.set_defaults(func=cmd_features)

    sp = common(sub.add_parser("sample-nas", help="sample architectures from the NAS space"),
                gpu=False, fusion=False)
    sp.add_argument("--count", type=int, required=True)
    sp.add_argument("--resolution", type=int, nargs=2, default=(224, 224), metavar=("H", "W"))
    sp.set_defaults(func=cmd_sample_nas)

    sp = common(sub.add_parser("gen-data", help="synthetic measurements from an oracle"))
    sp.add_argument("graphs", help="directory of graph files")
    sp.add_argument("--scenario", type=_scenario_arg, required=True)
    sp.add_argument("--oracle", choices=ORACLE_KINDS, default="linear")
    sp.add_argument("--noise", type=float, default=0.0, help="log-normal sigma")
    sp.add_argument("--overhead", type=float, default=0.0, help="framework overhead, ms")
    sp.set_defaults(func=cmd_gen_data)

    sp = common(sub.add_parser("train", help="train one predictor per kernel kind"))
    sp.add_argument("measurements")
    sp.add_argument("graphs", help="directory of graph files")
    sp.add_argument("--scenario", type=_scenario_arg, default=None,
                    help="must match the measurement file if given")
    sp.add_argument("--algo", choices=ALGORITHMS, default=None)
    sp.add_argument("--folds", type=int, default=None)
    sp.add_argument("--jobs", type=int, default=None)
    sp.add_argument("--merge", default=None, help="existing bundle to extend")
    sp.set_defaults(func=cmd_train)

    sp = common(sub.add_parser("predict", help="predict end-to-end latency of a graph"))
    sp.add_argument("graph")
    sp.add_argument("bundle")
    sp.add_argument("--scenario", type=_scenario_arg, required=True)
    sp.set_defaults(func=cmd_predict)

    sp = common(sub.add_parser("eval", help="MAPE of a bundle against measurements"))
    sp.add_argument("bundle")
    sp.add_argument("measurements")
    sp.add_argument("graphs", help="directory of graph files")
    sp.set_defaults(func=cmd_eval)
    return p


def _resolve(args, cfg: dict) -> None:
    defaults = {"seed": 0, "algo": "lasso", "gpu": None, "fusion": True, "folds": None, "jobs": 1,
                "train_options": None}
    for key, fallback in defaults.items():
        if getattr(args, key, None) is None:
            setattr(args, key, cfg.get(key, fallback))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)
    try:
        _resolve(args, _load_config(args.config))
        resolved = {k: v for k, v in vars(args).items() if k != "func"}
        if resolved.get("gpu") is not None:
            resolved["gpu"] = resolved["gpu"].vendor_class.value
        log.info("config %s", json.dumps(resolved, default=str, sort_keys=True))
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"mobilat: error: {exc}", file=sys.stderr)
        return 2
    except (GraphError, MeasurementError, MissingPredictorError, ValueError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"mobilat: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
