"""Per-kernel feature vectors and feature standardization."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .gpu_compile import Kernel, KernelKind
from .graph import ComputationalGraph, OpKind

SCHEMA_VERSION = 1

_CONV = (
    "input_h", "input_w", "input_c", "output_h", "output_w", "stride",
    "kernel_h", "kernel_w", "filters", "input_size", "output_size", "kernel_size", "flops",
)

SCHEMAS: dict[KernelKind, tuple[str, ...]] = {
    KernelKind.CONV2D: _CONV,
    KernelKind.WINOGRAD: _CONV,
    KernelKind.DEPTHWISE_CONV2D: _CONV,
    KernelKind.GROUPED_CONV2D: _CONV + ("group_number",),
    KernelKind.FULLY_CONNECTED: ("input_c", "filters", "parameter_size", "flops"),
    KernelKind.MEAN: ("input_h", "input_w", "input_c", "kernel_h", "kernel_w", "input_size", "flops"),
    KernelKind.CONCAT: ("input_h", "input_w", "input_c", "kernel_h", "kernel_w", "output_c",
                        "input_size", "output_size"),
    KernelKind.SPLIT: ("input_h", "input_w", "input_c", "kernel_h", "kernel_w", "output_c",
                       "input_size", "output_size"),
    KernelKind.POOLING: ("input_h", "input_w", "input_c", "output_h", "output_w", "stride",
                         "kernel_h", "kernel_w", "input_size", "output_size", "flops"),
    KernelKind.PADDING: ("input_h", "input_w", "input_c", "output_h", "output_w", "padding_size",
                         "output_size"),
    KernelKind.ELEMENTWISE: ("input_h", "input_w", "input_c", "input_size"),
}

EPS = 1e-12


class FeatureError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureVector:
    values: tuple[float, ...]
    kind: KernelKind

    def __post_init__(self):
        if len(self.values) != len(SCHEMAS[self.kind]):
            raise FeatureError(f"{self.kind.value} expects {len(SCHEMAS[self.kind])} features, "
                               f"got {len(self.values)}")

    def as_dict(self) -> dict[str, float]:
        return dict(zip(SCHEMAS[self.kind], self.values))


def _raw_features(kind: KernelKind, node, graph: ComputationalGraph) -> dict[str, float]:
    x = graph.shape(node.src[0])
    y = graph.shape(node.dst[0])
    a = node.attrs
    f = {
        "input_h": x.height, "input_w": x.width, "input_c": x.channels,
        "output_h": y.height, "output_w": y.width, "output_c": y.channels,
        "input_size": x.size, "output_size": y.size,
    }
    op = node.kind
    if op is OpKind.CONV2D:
        per_group = x.channels // a.groups
        macs = y.height * y.width * a.filters * per_group * a.kernel_h * a.kernel_w
        f.update(stride=a.stride, kernel_h=a.kernel_h, kernel_w=a.kernel_w, filters=a.filters,
                 kernel_size=a.kernel_h * a.kernel_w * per_group * a.filters,
                 flops=2 * macs, group_number=a.groups)
    elif op is OpKind.DEPTHWISE_CONV2D:
        f.update(stride=a.stride, kernel_h=a.kernel_h, kernel_w=a.kernel_w, filters=x.channels,
                 kernel_size=a.kernel_h * a.kernel_w * x.channels,
                 flops=2 * y.height * y.width * x.channels * a.kernel_h * a.kernel_w)
    elif op is OpKind.FULLY_CONNECTED:
        # Inputs are flattened: a 1x1xC tensor feeds C values.
        f.update(input_c=x.size, filters=a.filters, parameter_size=x.size * a.filters,
                 flops=2 * x.size * a.filters)
    elif op is OpKind.MEAN:
        f.update(kernel_h=x.height, kernel_w=x.width, flops=x.size)
    elif op in (OpKind.CONCAT, OpKind.SPLIT):
        f.update(kernel_h=x.height, kernel_w=x.width,
                 input_size=sum(graph.shape(t).size for t in node.src),
                 output_size=sum(graph.shape(t).size for t in node.dst))
    elif op is OpKind.POOLING:
        f.update(stride=a.stride, kernel_h=a.kernel_h, kernel_w=a.kernel_w, flops=x.size)
    elif op is OpKind.PADDING:
        f.update(padding_size=y.size - x.size)
    elif op not in (OpKind.ELEMENTWISE, OpKind.ACTIVATION, OpKind.COPY):
        raise FeatureError(f"unsupported operation kind {op.value}")
    return f


def extract_features(kernel: Kernel, graph: ComputationalGraph) -> FeatureVector:
    """Feature vector of ``kernel``; ``graph`` is the original, shape-inferred graph.

    Fused kernels are featurized from their base operation alone.
    """
    node = graph.node(kernel.base_node)
    raw = _raw_features(kernel.kind, node, graph)
    try:
        values = tuple(float(raw[name]) for name in SCHEMAS[kernel.kind])
    except KeyError as exc:
        raise FeatureError(f"kernel {kernel.base_node} ({node.kind.value}) cannot fill "
                           f"{kernel.kind.value} feature {exc}") from None
    return FeatureVector(values, kernel.kind)


def _as_matrix(rows: Sequence[FeatureVector]) -> tuple[np.ndarray, KernelKind]:
    if not rows:
        raise FeatureError("no feature rows")
    kinds = {r.kind for r in rows}
    if len(kinds) != 1:
        raise FeatureError(f"mixed schemas: {sorted(k.value for k in kinds)}")
    return np.array([r.values for r in rows], dtype=float), rows[0].kind


@dataclass(frozen=True)
class Standardizer:
    mu: np.ndarray
    sigma: np.ndarray
    kind: KernelKind

    @property
    def scale(self) -> np.ndarray:
        return np.maximum(self.sigma, EPS)

    def transform_matrix(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.mu.shape[0]:
            raise FeatureError(f"expected {self.mu.shape[0]} features, got {X.shape[-1]}")
        return (X - self.mu) / self.scale

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "mu": self.mu.tolist(), "sigma": self.sigma.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        kind = KernelKind(d["kind"])
        mu = np.asarray(d["mu"], dtype=float)
        sigma = np.asarray(d["sigma"], dtype=float)
        if mu.shape != (len(SCHEMAS[kind]),) or sigma.shape != mu.shape:
            raise FeatureError(f"standardizer does not match the {kind.value} schema")
        return cls(mu, sigma, kind)


def fit_standardizer_matrix(X: np.ndarray, kind: KernelKind) -> Standardizer:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise FeatureError("no feature rows")
    if X.shape[1] != len(SCHEMAS[kind]):
        raise FeatureError(f"{kind.value} expects {len(SCHEMAS[kind])} features, got {X.shape[1]}")
    mu = X.mean(axis=0)
    sigma = np.sqrt(((X - mu) ** 2).mean(axis=0))
    return Standardizer(mu, sigma, kind)


def fit_standardizer(rows: Sequence[FeatureVector]) -> Standardizer:
    """Population mean and standard deviation (divide by N) of each feature."""
    X, kind = _as_matrix(rows)
    return fit_standardizer_matrix(X, kind)


def transform(std: Standardizer, row: FeatureVector) -> np.ndarray:
    if row.kind is not std.kind and SCHEMAS[row.kind] != SCHEMAS[std.kind]:
        raise FeatureError(f"schema mismatch: standardizer for {std.kind.value}, row is {row.kind.value}")
    return std.transform_matrix(np.asarray(row.values, dtype=float))


def features_csv(rows: Iterable[tuple[str, FeatureVector]], kind: KernelKind) -> str:
    """CSV with a header of schema names; first column is the kernel id."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("id",) + SCHEMAS[kind])
    for kernel_id, fv in rows:
        if fv.kind is not kind:
            raise FeatureError(f"row {kernel_id} is {fv.kind.value}, expected {kind.value}")
        writer.writerow((kernel_id,) + tuple(_fmt(v) for v in fv.values))
    return buf.getvalue()


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(v)
