"""Kernel deduction for mobile GPUs: kernel fusion and convolution kernel selection.

Mirrors the TFLite GPU delegate.  ``merge_nodes`` folds a cheap linkable
operation together with its producer; ``select_conv2d_kernel`` picks between the
plain, Winograd and grouped convolution kernels depending on the GPU family and
the convolution shape.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Optional

from .graph import (
    ELEMENTWISE_OPS,
    ComputationalGraph,
    OperationNode,
    OpKind,
)


class VendorClass(str, enum.Enum):
    ADRENO6XX = "adreno6xx"
    ADRENO_OTHER = "adreno"
    AMD = "amd"
    OTHER = "other"


# Known GPU models -> vendor class.  Anything unlisted falls back on a prefix rule.
_GPU_MODELS = {
    "adreno640": VendorClass.ADRENO6XX,
    "adreno616": VendorClass.ADRENO6XX,
    "adreno630": VendorClass.ADRENO6XX,
    "adreno650": VendorClass.ADRENO6XX,
    "malig76": VendorClass.OTHER,
    "powervrge8320": VendorClass.OTHER,
}


@dataclass(frozen=True)
class GpuInfo:
    vendor_class: VendorClass

    @property
    def is_adreno(self) -> bool:
        return self.vendor_class in (VendorClass.ADRENO6XX, VendorClass.ADRENO_OTHER)

    @classmethod
    def parse(cls, name: str) -> "GpuInfo":
        """Accept a vendor class (``adreno6xx``, ``adreno``, ``amd``, ``other``)
        or a GPU model name such as ``"Adreno 640"`` or ``"Mali G76"``."""
        key = "".join(name.lower().split()).replace("-", "").replace("_", "")
        for vc in VendorClass:
            if key == vc.value:
                return cls(vc)
        if key in _GPU_MODELS:
            return cls(_GPU_MODELS[key])
        if key.startswith("adreno") and key[6:].isdigit():
            return cls(VendorClass.ADRENO6XX if key[6] == "6" and len(key) == 9 else VendorClass.ADRENO_OTHER)
        if key.startswith(("mali", "powervr")):
            return cls(VendorClass.OTHER)
        if key.startswith(("amd", "radeon")):
            return cls(VendorClass.AMD)
        raise ValueError(f"unknown GPU {name!r}")


class KernelKind(str, enum.Enum):
    CONV2D = "conv2d"
    WINOGRAD = "winograd"
    GROUPED_CONV2D = "grouped_conv2d"
    DEPTHWISE_CONV2D = "depthwise_conv2d"
    FULLY_CONNECTED = "fully_connected"
    MEAN = "mean"
    CONCAT = "concat"
    SPLIT = "split"
    POOLING = "pooling"
    PADDING = "padding"
    ELEMENTWISE = "elementwise"


_NATURAL_KIND = {
    OpKind.CONV2D: KernelKind.CONV2D,
    OpKind.DEPTHWISE_CONV2D: KernelKind.DEPTHWISE_CONV2D,
    OpKind.FULLY_CONNECTED: KernelKind.FULLY_CONNECTED,
    OpKind.MEAN: KernelKind.MEAN,
    OpKind.CONCAT: KernelKind.CONCAT,
    OpKind.SPLIT: KernelKind.SPLIT,
    OpKind.POOLING: KernelKind.POOLING,
    OpKind.PADDING: KernelKind.PADDING,
    OpKind.ELEMENTWISE: KernelKind.ELEMENTWISE,
    OpKind.ACTIVATION: KernelKind.ELEMENTWISE,
    OpKind.COPY: KernelKind.ELEMENTWISE,
}


@dataclass(frozen=True)
class Kernel:
    base_node: str
    kind: KernelKind
    linked_nodes: tuple[str, ...] = ()

    @property
    def members(self) -> tuple[str, ...]:
        return (self.base_node,) + self.linked_nodes


@dataclass(frozen=True)
class KernelSequence:
    kernels: tuple[Kernel, ...]
    gpu: Optional[GpuInfo]
    node_count: int

    @property
    def kernel_count(self) -> int:
        return len(self.kernels)

    def to_dict(self) -> dict:
        return {
            "gpu": None if self.gpu is None else self.gpu.vendor_class.value,
            "kernels": [
                {"base": k.base_node, "kind": k.kind.value, "linked": list(k.linked_nodes)}
                for k in self.kernels
            ],
            "summary": {"node_count": self.node_count, "kernel_count": self.kernel_count},
        }


# ---------------------------------------------------------------------------
# Fusion
# ---------------------------------------------------------------------------

def is_linkable(node: OperationNode) -> bool:
    if len(node.dst) != 1:
        return False
    if node.kind in (OpKind.ACTIVATION, OpKind.COPY):
        return True
    return node.kind is OpKind.ELEMENTWISE and node.attrs.op in ELEMENTWISE_OPS


def _merge(cur: OperationNode, nxt: OperationNode) -> OperationNode:
    # The fused node reads cur's inputs plus nxt's remaining inputs, writes nxt's
    # outputs, and is classified by cur (the dominant member, since nxt is always
    # linkable).  The intermediate tensor disappears from the dataflow.
    return replace(
        cur,
        src=cur.src + nxt.src[1:],
        dst=nxt.dst,
        linked=cur.linked + (nxt.id,) + nxt.linked,
    )


def merge_nodes(graph: ComputationalGraph) -> ComputationalGraph:
    """Single-pass kernel fusion over the topologically ordered node list.

    A node ``cur`` is fused with the unique consumer ``nxt`` of its only output
    when ``nxt`` reads that tensor at source index 0, the tensor is ready, and
    ``nxt`` is linkable.  The surviving node keeps cur's id and kind and records
    the fused ids in ``linked``.
    """
    nodes = list(graph.nodes)
    ready: set[str] = set()
    i = 0
    while i < len(nodes):
        cur = nodes[i]
        ready.update(cur.dst)
        if len(cur.dst) != 1:
            i += 1
            continue
        out = cur.dst[0]
        candidates: list[int] = []
        candidate_index = 0
        for pos, nxt in enumerate(nodes):
            for k, t in enumerate(nxt.src):
                if t == out:
                    candidate_index = k
                    candidates.append(pos)
        if len(candidates) != 1 or candidate_index != 0:
            i += 1
            continue
        j = candidates[0]
        nxt = nodes[j]
        if nxt.src[0] in ready and is_linkable(nxt):
            nodes[j] = _merge(cur, nxt)
            del nodes[i]
        else:
            i += 1
    return replace(graph, nodes=tuple(nodes))


# ---------------------------------------------------------------------------
# Convolution kernel selection
# ---------------------------------------------------------------------------

def check_grouped_conv2d(gpu: GpuInfo, groups: int, input_channels: int, filters: int) -> bool:
    # Source group size is the full input channel count, as in the delegate.
    src_group_size = input_channels
    dst_group_size = filters // groups
    return groups != 1 and src_group_size % 4 == 0 and dst_group_size % 4 == 0


def check_winograd(
    gpu: GpuInfo,
    *,
    groups: int,
    kernel_h: int,
    kernel_w: int,
    stride: int,
    input_channels: int,
    output_channels: int,
    output_height: int,
    output_width: int,
) -> bool:
    if groups != 1 or (kernel_h, kernel_w) != (3, 3) or stride != 1:
        return False
    src_depth = math.ceil(input_channels / 4)
    dst_depth = math.ceil(output_channels / 4)
    vc = gpu.vendor_class
    if gpu.is_adreno:
        if src_depth < 32 or dst_depth < 32:
            return False
    elif vc is VendorClass.AMD:
        if src_depth < 16 or dst_depth < 8:
            return False
    elif src_depth < 16 or dst_depth < 16:
        return False

    total_tiles = math.ceil(output_height / 4) * math.ceil(output_width / 4)
    if vc is VendorClass.ADRENO6XX:
        return total_tiles >= 128
    if gpu.is_adreno:
        return total_tiles >= 64
    return total_tiles >= 32


def select_conv2d_kernel(gpu: GpuInfo, node: OperationNode, graph: ComputationalGraph) -> KernelKind:
    """Kernel choice for a Conv2D node; shapes come from ``graph``."""
    if node.kind is not OpKind.CONV2D:
        raise ValueError(f"node {node.id} is {node.kind.value}, not conv2d")
    a = node.attrs
    x = graph.shape(node.src[0])
    y = graph.shape(node.dst[0])
    if check_grouped_conv2d(gpu, a.groups, x.channels, a.filters):
        return KernelKind.GROUPED_CONV2D
    if check_winograd(
        gpu,
        groups=a.groups,
        kernel_h=a.kernel_h,
        kernel_w=a.kernel_w,
        stride=a.stride,
        input_channels=x.channels,
        output_channels=y.channels,
        output_height=y.height,
        output_width=y.width,
    ):
        return KernelKind.WINOGRAD
    return KernelKind.CONV2D


def natural_kernel_kind(node: OperationNode) -> KernelKind:
    """Kernel kind of an operation executed as-is (the CPU path).

    A convolution with more than one group is its own category on CPUs too,
    so that its features carry the group count.
    """
    if node.kind is OpKind.CONV2D and node.attrs.groups > 1:
        return KernelKind.GROUPED_CONV2D
    return _NATURAL_KIND[node.kind]


def compile_graph(graph: ComputationalGraph, gpu: GpuInfo, fusion: bool = True) -> KernelSequence:
    """Deduce the kernels a GPU executes for ``graph`` (validated, shapes inferred)."""
    fused = merge_nodes(graph) if fusion else graph
    kernels = []
    for n in fused.nodes:
        base = graph.node(n.id)
        if base.kind is OpKind.CONV2D:
            kind = select_conv2d_kernel(gpu, base, graph)
        else:
            kind = _NATURAL_KIND[base.kind]
        kernels.append(Kernel(n.id, kind, n.linked))
    return KernelSequence(tuple(kernels), gpu, len(graph.nodes))


def cpu_kernels(graph: ComputationalGraph) -> KernelSequence:
    """CPU path: every operation runs on its own, in graph order."""
    kernels = tuple(Kernel(n.id, natural_kernel_kind(n)) for n in graph.nodes)
    return KernelSequence(kernels, None, len(graph.nodes))
