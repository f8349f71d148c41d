"""Acceptance criteria 1-8, each printing one PASS/FAIL line with its measurements.

Run alone with ``pytest tests/test_acceptance.py -v``; the result lines are
printed even when output capture is on.
"""
import time

import numpy as np
import pytest

from mobilat.features import fit_standardizer_matrix
from mobilat.gpu_compile import GpuInfo, KernelKind, VendorClass, check_winograd, compile_graph, merge_nodes
from mobilat.graph import OpKind, serialize_graph, validate
from mobilat.latency import collect_training_data, estimate_overhead, predict_end_to_end
from mobilat.nas import (
    CHANNEL_RANGES,
    HALVING_BLOCKS,
    N_BLOCKS,
    lower_to_graph,
    sample_architecture,
    sample_graphs,
)
from mobilat.oracle import OracleSpec, generate_dataset, kernel_dataset
from mobilat.predictors import LassoModel, mape, train_gbdt, train_lasso, train_rf
from mobilat.predictors.bundle import BundleEntry, PredictorBundle
from mobilat.predictors.cv import derive_seed
from mobilat.predictors.lasso import kkt_residual
from mobilat.scenario import ScenarioKey

from fusion_reference import expected_fusion, fusible_pairs
from small_graphs import all_graphs

CPU = ScenarioKey("desk", "cpu", "1L")


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail
    return emit


def test_criterion_1_winograd_table(report):
    start = time.perf_counter()
    table = [
        # C_in, C_out, H_out, Adreno6xx, Other
        (64, 64, 56, False, True),
        (128, 128, 28, False, True),
        (256, 256, 14, False, False),
    ]
    hits = 0
    for c_in, c_out, h, adreno, other in table:
        for gpu, want in ((GpuInfo(VendorClass.ADRENO6XX), adreno), (GpuInfo(VendorClass.OTHER), other)):
            got = check_winograd(gpu, groups=1, kernel_h=3, kernel_w=3, stride=1, input_channels=c_in,
                                 output_channels=c_out, output_height=h, output_width=h)
            hits += got is want
    elapsed = time.perf_counter() - start
    report(1, hits == 6 and elapsed < 1, f"{hits}/6 decisions match, {elapsed:.3f}s")


def test_criterion_2_fusion_oracle(report):
    start = time.perf_counter()
    total = matched = idempotent = 0
    for g in all_graphs(max_nodes=4):
        total += 1
        m = merge_nodes(g)
        matched += {n.id: (n.linked, n.src, n.dst) for n in m.nodes} == expected_fusion(g)
        idempotent += merge_nodes(m) == m
    elapsed = time.perf_counter() - start
    ok = matched == total and idempotent == total and elapsed < 30
    report(2, ok, f"{matched}/{total} match reference, {idempotent}/{total} idempotent, {elapsed:.1f}s")


def test_criterion_3_lasso_recovery(report):
    start = time.perf_counter()
    oracle = OracleSpec("linear")
    graphs = sample_graphs(150, 3)
    X, y = kernel_dataset(graphs, KernelKind.CONV2D, oracle, CPU)
    Xtr, ytr, Xte, yte = X[:900], y[:900], X[900:], y[900:]
    std = fit_standardizer_matrix(Xtr, KernelKind.CONV2D)
    A = std.transform_matrix(Xtr)
    model = train_lasso(A, ytr, seed=0)
    # Generator weights expressed on standardized features.
    w_true = oracle.weight_vector(KernelKind.CONV2D) * std.sigma
    b_true = float(oracle.weight_vector(KernelKind.CONV2D) @ std.mu)
    w_err = float(np.max(np.abs(model.weights - w_true)))
    kkt = kkt_residual(A, ytr, model.weights, model.intercept, model.alpha)
    test_mape = mape(model.predict(std.transform_matrix(Xte)), yte)
    elapsed = time.perf_counter() - start
    ok = len(ytr) == 900 and len(yte) > 0 and w_err < 1e-3 and test_mape < 0.005 and kkt < 1e-5 and elapsed < 60
    report(3, ok, f"N=900 train / {len(yte)} test, max|w-w*|={w_err:.2e}, intercept err "
                  f"{abs(model.intercept - b_true):.2e}, held-out MAPE {100 * test_mape:.4f}%, "
                  f"KKT {kkt:.2e}, alpha {model.alpha:.0e}, {elapsed:.1f}s")


def test_criterion_4_tree_ensembles(report):
    start = time.perf_counter()
    # 900 training and 100 test architectures; predictors see their conv kernels.
    graphs = sample_graphs(1000, 11)
    train_g, test_g = graphs[:900], graphs[900:]
    smooth = OracleSpec("smooth")
    Xtr, ytr = kernel_dataset(train_g, KernelKind.CONV2D, smooth, CPU)
    Xte, yte = kernel_dataset(test_g, KernelKind.CONV2D, smooth, CPU)
    std = fit_standardizer_matrix(Xtr, KernelKind.CONV2D)
    A, B = std.transform_matrix(Xtr), std.transform_matrix(Xte)
    gbdt = train_gbdt(A, ytr, seed=1)
    rf = train_rf(A, ytr, seed=1)
    gbdt_mape = mape(gbdt.predict(B), yte)
    rf_mape = mape(rf.predict(B), yte)

    # Scarce data: 30 training kernels from the linear oracle.
    linear = OracleSpec("linear")
    Xs, ys = kernel_dataset(train_g[:10], KernelKind.CONV2D, linear, CPU, limit=30)
    Xl, yl = kernel_dataset(test_g, KernelKind.CONV2D, linear, CPU)
    std_s = fit_standardizer_matrix(Xs, KernelKind.CONV2D)
    As, Bl = std_s.transform_matrix(Xs), std_s.transform_matrix(Xl)
    lasso_small = mape(train_lasso(As, ys, seed=2).predict(Bl), yl)
    gbdt_small = mape(train_gbdt(As, ys, seed=2).predict(Bl), yl)
    elapsed = time.perf_counter() - start

    ok = (gbdt_mape < 0.05 and rf_mape < 0.08 and len(ys) == 30 and lasso_small < gbdt_small
          and elapsed < 300)
    report(4, ok, f"smooth oracle ({len(ytr)} train / {len(yte)} test kernels): GBDT {100 * gbdt_mape:.2f}% "
                  f"(stages {gbdt.n_stages}, mss {gbdt.min_samples_split}), RF {100 * rf_mape:.2f}% "
                  f"(trees {rf.n_trees}, mss {rf.min_samples_split}); N=30 linear: Lasso "
                  f"{100 * lasso_small:.3f}% vs GBDT {100 * gbdt_small:.2f}%; {elapsed:.0f}s")


def test_criterion_5_identity_and_overhead(report):
    start = time.perf_counter()
    rng = np.random.default_rng(5)
    graphs = sample_graphs(50, 21)
    gpu = GpuInfo(VendorClass.ADRENO6XX)
    gpu_sc = ScenarioKey("desk", "gpu")
    # Standardizers fitted on real kernels; Lasso weights drawn at random.
    stds = {}
    for sc, g in ((CPU, None), (gpu_sc, gpu)):
        ms = generate_dataset(graphs, sc, OracleSpec("linear"), gpu=g)
        data = collect_training_data(ms, dict(zip([a.graph_ref for a in ms.architectures], graphs)), g)
        stds[sc] = {k: fit_standardizer_matrix(np.asarray(v), k) for k, v in data.rows.items()}
    exact = 0
    for i in range(1000):
        sc, g = (CPU, None) if i % 2 == 0 else (gpu_sc, gpu)
        bundle = PredictorBundle()
        for kind, std in stds[sc].items():
            w = rng.exponential(1.0, len(std.mu)) * (rng.random(len(std.mu)) < 0.5)
            bundle.add(sc, kind, BundleEntry(std, LassoModel(w, float(rng.uniform(0, 3)), 0.0)))
        bundle.overhead[sc] = float(rng.uniform(-2, 10))
        pred = predict_end_to_end(graphs[i % len(graphs)], sc, bundle, g)
        exact += pred.total_ms == pred.overhead_ms + sum(k.ms for k in pred.per_kernel)

    worst = 0.0
    for overhead in (0.0, 1.5, 7.25, 123.456):
        ms = generate_dataset(graphs, CPU, OracleSpec("smooth", overhead_ms=overhead))
        est = estimate_overhead([(a.end_to_end_ms, [v for _, v in a.kernels]) for a in ms.architectures])
        worst = max(worst, abs(est - overhead))
    elapsed = time.perf_counter() - start
    ok = exact == 1000 and worst < 1e-9 and elapsed < 30
    report(5, ok, f"{exact}/1000 totals exact, overhead recovery error {worst:.1e}, {elapsed:.1f}s")


def test_criterion_6_standardization(report):
    start = time.perf_counter()
    worst_mean = worst_std = 0.0
    for d in range(50):
        rng = np.random.default_rng(derive_seed(6, d))
        kind = (KernelKind.CONV2D, KernelKind.POOLING, KernelKind.ELEMENTWISE)[d % 3]
        n = int(rng.integers(20, 2000))
        width = {KernelKind.CONV2D: 13, KernelKind.POOLING: 11, KernelKind.ELEMENTWISE: 4}[kind]
        X = rng.lognormal(rng.uniform(0, 15, width), rng.uniform(0.05, 2.5, width), size=(n, width))
        X[:, 0] = np.round(X[:, 0])
        if d % 5 == 0:
            X[:, -1] = 7.0     # a degenerate column
        std = fit_standardizer_matrix(X, kind)
        Z = std.transform_matrix(X)
        worst_mean = max(worst_mean, float(np.max(np.abs(Z.mean(axis=0)))))
        live = std.sigma > 0
        worst_std = max(worst_std, float(np.max(np.abs(Z.std(axis=0)[live] - 1))))
    elapsed = time.perf_counter() - start
    ok = worst_mean < 1e-9 and worst_std < 1e-9 and elapsed < 10
    report(6, ok, f"50 datasets, max|mean|={worst_mean:.1e}, max|std-1|={worst_std:.1e}, {elapsed:.2f}s")


def test_criterion_7_nas_conformance(report):
    start = time.perf_counter()
    failures = []
    for i in range(1000):
        seed = derive_seed(7, "arch", i)
        arch = sample_architecture(seed)
        if len(arch.blocks) != N_BLOCKS or len(arch.channels) != 10:
            failures.append((i, "block count"))
        if not all(lo <= c <= hi for c, (lo, hi) in zip(arch.channels, CHANNEL_RANGES)):
            failures.append((i, "channel range"))
        g = lower_to_graph(arch)
        if validate(g):
            failures.append((i, "validation"))
        h = 224
        for b in range(1, N_BLOCKS + 1):
            if b in HALVING_BLOCKS:
                h = -(-h // 2)
            last = [n for n in g.nodes if n.id.startswith(f"b{b}_")][-1]
            if g.shape(last.dst[0]).height != h:
                failures.append((i, f"stride schedule at block {b}"))
        head = g.nodes[-3:]
        if ([n.kind for n in head] != [OpKind.CONV2D, OpKind.MEAN, OpKind.FULLY_CONNECTED]
                or g.shape(head[0].dst[0]).channels != arch.channels[9]
                or g.shape(head[2].dst[0]).channels != 1000):
            failures.append((i, "head"))
        if serialize_graph(lower_to_graph(sample_architecture(seed))) != serialize_graph(g):
            failures.append((i, "determinism"))
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 60
    report(7, ok, f"1000 architectures, {len(failures)} violations {failures[:3]}, {elapsed:.1f}s")


def test_criterion_8_fusion_count(report):
    start = time.perf_counter()
    graphs = sample_graphs(1000, 8)
    gpu = GpuInfo(VendorClass.OTHER)
    agree = 0
    nodes = kernels = 0
    for g in graphs:
        seq = compile_graph(g, gpu)
        pairs = len(fusible_pairs(g))
        agree += seq.kernel_count == seq.node_count - pairs
        nodes += seq.node_count
        kernels += seq.kernel_count
    elapsed = time.perf_counter() - start
    reduction = 1 - kernels / nodes
    report(8, agree == 1000, f"{agree}/1000 graphs match the independent count; kernel reduction "
                             f"{100 * reduction:.1f}% ({nodes} nodes -> {kernels} kernels), {elapsed:.1f}s")
