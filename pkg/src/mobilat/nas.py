"""Random architectures from a nine-block mobile NAS space, lowered to graphs.

Every block outputs C_i channels.  Blocks 1, 3, 5, 7 and 9 halve the spatial
size; the head is a 1x1 convolution to C_10 channels, a global mean and a
1000-way fully-connected layer.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .graph import (
    UNARY_ELEMENTWISE,
    ActivationAttrs,
    ComputationalGraph,
    ConvAttrs,
    DepthwiseAttrs,
    ElementwiseAttrs,
    FullyConnectedAttrs,
    NoAttrs,
    OperationNode,
    OpKind,
    PoolAttrs,
    SplitAttrs,
    TensorShape,
    infer_shapes,
    validate,
)
from .predictors.cv import derive_seed

KERNEL_SIZES = (3, 5, 7)
GROUP_SIZES = tuple(4 * k for k in range(1, 17))
EXPANSIONS = (1, 3, 6)
POOL_OPS = ("avg", "max")
POOL_SIZES = (1, 3)
SPLIT_COUNTS = (2, 3, 4)
BLOCK_TYPES = ("conv", "depthwise_separable", "linear_bottleneck", "pool", "split_merge")

N_BLOCKS = 9
HALVING_BLOCKS = frozenset({1, 3, 5, 7, 9})
CHANNEL_RANGES = ((8, 80),) * 5 + ((80, 400),) * 4 + ((1200, 1800),)
HEAD_CLASSES = 1000
SE_REDUCTION = 4
MAX_REDRAWS = 64


@dataclass(frozen=True)
class ConvBlock:
    kernel: int
    groups: Optional[int] = None


@dataclass(frozen=True)
class DepthwiseSeparableBlock:
    kernel: int


@dataclass(frozen=True)
class LinearBottleneckBlock:
    kernel: int
    expansion: int
    se: bool


@dataclass(frozen=True)
class PoolBlock:
    op: str
    size: int


@dataclass(frozen=True)
class SplitMergeBlock:
    splits: int
    # Unary element-wise op applied on each branch, in branch order.
    branch_ops: tuple[str, ...] = ()


BlockSpec = Union[ConvBlock, DepthwiseSeparableBlock, LinearBottleneckBlock, PoolBlock, SplitMergeBlock]


@dataclass(frozen=True)
class SampledArchitecture:
    blocks: tuple[BlockSpec, ...]
    channels: tuple[int, ...]       # C_1 .. C_10
    seed: int
    input_resolution: tuple[int, int] = (224, 224)
    input_channels: int = 3


def _pick(rng, options):
    return options[int(rng.integers(len(options)))]


def _sample_block(rng, kind: str) -> BlockSpec:
    if kind == "conv":
        # Grouping is first an on/off choice, then a group size 4k.
        groups = _pick(rng, GROUP_SIZES) if rng.integers(2) else None
        return ConvBlock(_pick(rng, KERNEL_SIZES), groups)
    if kind == "depthwise_separable":
        return DepthwiseSeparableBlock(_pick(rng, KERNEL_SIZES))
    if kind == "linear_bottleneck":
        return LinearBottleneckBlock(_pick(rng, KERNEL_SIZES), _pick(rng, EXPANSIONS), bool(rng.integers(2)))
    if kind == "pool":
        return PoolBlock(_pick(rng, POOL_OPS), _pick(rng, POOL_SIZES))
    splits = _pick(rng, SPLIT_COUNTS)
    return SplitMergeBlock(splits, tuple(_pick(rng, UNARY_ELEMENTWISE) for _ in range(splits)))


def _draw_channels(rng, lo: int, hi: int, multiple_of: int = 1) -> int:
    c = int(rng.integers(lo, hi + 1))
    tries = 1
    while c % multiple_of and tries < MAX_REDRAWS:
        c = int(rng.integers(lo, hi + 1))
        tries += 1
    if c % multiple_of:
        c = c - c % multiple_of
        if c < lo:
            c += multiple_of
    return c


def sample_architecture(seed: int, input_resolution: tuple[int, int] = (224, 224)) -> SampledArchitecture:
    rng = np.random.default_rng(seed)
    blocks = [_sample_block(rng, _pick(rng, BLOCK_TYPES)) for _ in range(N_BLOCKS)]

    channels = []
    for i, (lo, hi) in enumerate(CHANNEL_RANGES):
        b = blocks[i] if i < N_BLOCKS else None
        channels.append(_draw_channels(rng, lo, hi, b.splits if isinstance(b, SplitMergeBlock) else 1))

    # Group counts must divide the block's input and output channel counts.
    c_in = 3
    for i, b in enumerate(blocks):
        if isinstance(b, ConvBlock) and b.groups is not None:
            g = b.groups
            tries = 1
            while (c_in % g or channels[i] % g) and tries < MAX_REDRAWS:
                g = _pick(rng, GROUP_SIZES)
                tries += 1
            blocks[i] = ConvBlock(b.kernel, None if (c_in % g or channels[i] % g) else g)
        c_in = channels[i]
    return SampledArchitecture(tuple(blocks), tuple(channels), seed, tuple(input_resolution))


class _Builder:
    def __init__(self, input_shape: TensorShape):
        self.tensors: dict[str, Optional[TensorShape]] = {"input": input_shape}
        self.nodes: list[OperationNode] = []

    def op(self, node_id, kind, attrs, src, n_out=1) -> list[str]:
        dst = [f"{node_id}:out" if n_out == 1 else f"{node_id}:out{k}" for k in range(n_out)]
        for t in dst:
            self.tensors[t] = None
        self.nodes.append(OperationNode(node_id, kind, attrs, tuple(src), tuple(dst)))
        return dst

    def one(self, *args) -> str:
        return self.op(*args)[0]

    def conv(self, node_id, x, filters, kernel=1, stride=1, groups=1, act=True):
        y = self.one(node_id, OpKind.CONV2D, ConvAttrs(kernel, kernel, filters, stride, groups, "same"), [x])
        if act:
            y = self.one(node_id + "_relu", OpKind.ACTIVATION, ActivationAttrs("relu"), [y])
        return y


def lower_to_graph(arch: SampledArchitecture) -> ComputationalGraph:
    h, w = arch.input_resolution
    b = _Builder(TensorShape(h, w, arch.input_channels))
    x = "input"
    c_in = arch.input_channels
    for i, block in enumerate(arch.blocks, start=1):
        c_out = arch.channels[i - 1]
        stride = 2 if i in HALVING_BLOCKS else 1
        p = f"b{i}"
        if isinstance(block, ConvBlock):
            x = b.conv(f"{p}_conv", x, c_out, block.kernel, stride, block.groups or 1)
        elif isinstance(block, DepthwiseSeparableBlock):
            x = b.one(f"{p}_dw", OpKind.DEPTHWISE_CONV2D, DepthwiseAttrs(block.kernel, block.kernel, stride), [x])
            x = b.one(f"{p}_dw_relu", OpKind.ACTIVATION, ActivationAttrs("relu"), [x])
            x = b.conv(f"{p}_pw", x, c_out)
        elif isinstance(block, LinearBottleneckBlock):
            block_in = x
            mid = c_in * block.expansion
            if block.expansion > 1:
                x = b.conv(f"{p}_expand", x, mid)
            x = b.one(f"{p}_dw", OpKind.DEPTHWISE_CONV2D, DepthwiseAttrs(block.kernel, block.kernel, stride), [x])
            x = b.one(f"{p}_dw_relu", OpKind.ACTIVATION, ActivationAttrs("relu"), [x])
            if block.se:
                s = b.one(f"{p}_se_mean", OpKind.MEAN, NoAttrs(), [x])
                s = b.one(f"{p}_se_fc1", OpKind.FULLY_CONNECTED, FullyConnectedAttrs(max(1, mid // SE_REDUCTION)), [s])
                s = b.one(f"{p}_se_relu", OpKind.ACTIVATION, ActivationAttrs("relu"), [s])
                s = b.one(f"{p}_se_fc2", OpKind.FULLY_CONNECTED, FullyConnectedAttrs(mid), [s])
                s = b.one(f"{p}_se_gate", OpKind.ACTIVATION, ActivationAttrs("hard_sigmoid"), [s])
                x = b.one(f"{p}_se_mul", OpKind.ELEMENTWISE, ElementwiseAttrs("MUL"), [x, s])
            x = b.conv(f"{p}_project", x, c_out, act=False)
            if stride == 1 and c_in == c_out:
                x = b.one(f"{p}_add", OpKind.ELEMENTWISE, ElementwiseAttrs("ADD"), [x, block_in])
        elif isinstance(block, PoolBlock):
            x = b.one(f"{p}_pool", OpKind.POOLING, PoolAttrs(block.op, block.size, block.size, stride), [x])
            x = b.conv(f"{p}_proj", x, c_out)
        elif isinstance(block, SplitMergeBlock):
            x = b.conv(f"{p}_proj", x, c_out, 1, stride)
            parts = b.op(f"{p}_split", OpKind.SPLIT, SplitAttrs(block.splits), [x], n_out=block.splits)
            branches = [
                b.one(f"{p}_branch{k}", OpKind.ELEMENTWISE, ElementwiseAttrs(op), [t])
                for k, (t, op) in enumerate(zip(parts, block.branch_ops))
            ]
            x = b.one(f"{p}_concat", OpKind.CONCAT, NoAttrs(), branches)
        else:
            raise TypeError(f"unknown block {block!r}")
        c_in = c_out

    x = b.conv("head_conv", x, arch.channels[9], act=False)
    x = b.one("head_mean", OpKind.MEAN, NoAttrs(), [x])
    x = b.one("head_fc", OpKind.FULLY_CONNECTED, FullyConnectedAttrs(HEAD_CLASSES), [x])

    graph = ComputationalGraph(b.tensors, tuple(b.nodes), ("input",), (x,))
    violations = validate(graph)
    assert not violations, violations
    return infer_shapes(graph)


def sample_graphs(count: int, seed: int, input_resolution=(224, 224)) -> list[ComputationalGraph]:
    """Architectures drawn with per-index seeds, so any subset can be regenerated alone."""
    return [lower_to_graph(sample_architecture(derive_seed(seed, "arch", i), input_resolution))
            for i in range(count)]
