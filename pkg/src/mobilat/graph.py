"""Computational-graph data model, JSON format, validation and shape inference.

Tensors carry NHWC shapes with the batch dimension fixed at 1 and omitted.
Graphs are treated as immutable once parsed; passes return new graphs.
"""
from __future__ import annotations

import enum
import heapq
import json
import math
from dataclasses import dataclass, field, fields, replace
from typing import Any, Iterable, Optional


class GraphError(ValueError):
    """Raised for malformed, inconsistent or unsupported graph documents."""


class ShapeError(GraphError):
    """Raised when shape inference meets a conflict or an impossible shape."""


@dataclass(frozen=True)
class TensorShape:
    height: int
    width: int
    channels: int

    def __post_init__(self):
        for name in ("height", "width", "channels"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise GraphError(f"tensor {name} must be a positive integer, got {v!r}")

    @property
    def size(self) -> int:
        return self.height * self.width * self.channels


class OpKind(str, enum.Enum):
    CONV2D = "conv2d"
    DEPTHWISE_CONV2D = "depthwise_conv2d"
    FULLY_CONNECTED = "fully_connected"
    MEAN = "mean"
    CONCAT = "concat"
    SPLIT = "split"
    POOLING = "pooling"
    PADDING = "padding"
    ELEMENTWISE = "elementwise"
    ACTIVATION = "activation"
    COPY = "copy"


UNARY_ELEMENTWISE = ("EXP", "LOG", "SQRT", "SQUARE", "ABS", "NEG")
BINARY_ELEMENTWISE = (
    "ADD", "SUB", "MUL", "DIV", "POW", "EQUAL", "GREATER", "LESS", "MAXIMUM", "MINIMUM",
)
# Exactly the element-wise operations the GPU delegate can link into a producer.
ELEMENTWISE_OPS = frozenset(UNARY_ELEMENTWISE + BINARY_ELEMENTWISE)
ACTIVATION_FNS = ("relu", "relu6", "sigmoid", "hard_sigmoid", "hard_swish", "tanh")


# Attribute records.  Field names double as the JSON keys of the graph format.

@dataclass(frozen=True)
class ConvAttrs:
    kernel_h: int
    kernel_w: int
    filters: int
    stride: int = 1
    groups: int = 1
    padding: str = "same"


@dataclass(frozen=True)
class DepthwiseAttrs:
    kernel_h: int
    kernel_w: int
    stride: int = 1
    padding: str = "same"


@dataclass(frozen=True)
class PoolAttrs:
    pool: str
    kernel_h: int
    kernel_w: int
    stride: int = 1


@dataclass(frozen=True)
class FullyConnectedAttrs:
    filters: int


@dataclass(frozen=True)
class SplitAttrs:
    count: int


@dataclass(frozen=True)
class PadAttrs:
    pad_h: int
    pad_w: int


@dataclass(frozen=True)
class ElementwiseAttrs:
    op: str


@dataclass(frozen=True)
class ActivationAttrs:
    fn: str = "relu"


@dataclass(frozen=True)
class NoAttrs:
    pass


ATTR_TYPES: dict[OpKind, type] = {
    OpKind.CONV2D: ConvAttrs,
    OpKind.DEPTHWISE_CONV2D: DepthwiseAttrs,
    OpKind.FULLY_CONNECTED: FullyConnectedAttrs,
    OpKind.MEAN: NoAttrs,
    OpKind.CONCAT: NoAttrs,
    OpKind.SPLIT: SplitAttrs,
    OpKind.POOLING: PoolAttrs,
    OpKind.PADDING: PadAttrs,
    OpKind.ELEMENTWISE: ElementwiseAttrs,
    OpKind.ACTIVATION: ActivationAttrs,
    OpKind.COPY: NoAttrs,
}


@dataclass(frozen=True)
class OperationNode:
    """One operation of the graph.

    ``linked`` is empty for plain graph nodes.  After kernel fusion it lists the
    ids of the cheap operations folded into this node, in dataflow order.
    """

    id: str
    kind: OpKind
    attrs: Any
    src: tuple[str, ...]
    dst: tuple[str, ...]
    linked: tuple[str, ...] = ()

    @property
    def elementwise_op(self) -> Optional[str]:
        return self.attrs.op if self.kind is OpKind.ELEMENTWISE else None


@dataclass(frozen=True)
class Violation:
    subject: str
    message: str

    def __str__(self):
        return f"{self.subject}: {self.message}"


@dataclass(frozen=True)
class ComputationalGraph:
    tensors: dict[str, Optional[TensorShape]]
    nodes: tuple[OperationNode, ...]
    inputs: tuple[str, ...] = ()
    outputs: tuple[str, ...] = ()
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def node(self, node_id: str) -> OperationNode:
        index = self._index
        if index is None:
            index = {n.id: n for n in self.nodes}
            object.__setattr__(self, "_index", index)
        return index[node_id]

    def shape(self, tensor_id: str) -> TensorShape:
        shape = self.tensors.get(tensor_id)
        if shape is None:
            raise ShapeError(f"shape of tensor {tensor_id!r} is unknown; run infer_shapes first")
        return shape

    def producers(self) -> dict[str, str]:
        """Map tensor id -> id of the node producing it."""
        out = {}
        for n in self.nodes:
            for t in n.dst:
                out[t] = n.id
        return out

    def consumers(self) -> dict[str, list[tuple[str, int]]]:
        """Map tensor id -> list of (consumer node id, source index)."""
        out: dict[str, list[tuple[str, int]]] = {}
        for n in self.nodes:
            for k, t in enumerate(n.src):
                out.setdefault(t, []).append((n.id, k))
        return out


# ---------------------------------------------------------------------------
# JSON format
# ---------------------------------------------------------------------------

def _parse_attrs(kind: OpKind, raw: Any, node_id: str):
    cls = ATTR_TYPES[kind]
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise GraphError(f"node {node_id}: attrs must be an object")
    allowed = {f.name for f in fields(cls)}
    unknown = set(raw) - allowed
    if unknown:
        raise GraphError(f"node {node_id}: unknown attribute(s) {sorted(unknown)} for {kind.value}")
    try:
        attrs = cls(**raw)
    except TypeError as exc:
        raise GraphError(f"node {node_id}: bad attributes for {kind.value}: {exc}") from None
    for f in fields(cls):
        v = getattr(attrs, f.name)
        if f.type == "int" and (not isinstance(v, int) or isinstance(v, bool)):
            raise GraphError(f"node {node_id}: attribute {f.name} must be an integer")
    return attrs


def _parse_shape(tid: str, raw: Any) -> Optional[TensorShape]:
    if raw is None or raw == {}:
        return None
    if not isinstance(raw, dict) or set(raw) != {"h", "w", "c"}:
        raise GraphError(f"tensor {tid}: shape must be an object with keys h, w, c")
    return TensorShape(raw["h"], raw["w"], raw["c"])


def graph_from_dict(doc: Any) -> ComputationalGraph:
    if not isinstance(doc, dict):
        raise GraphError("graph document must be a JSON object")
    unknown = set(doc) - {"tensors", "nodes", "inputs", "outputs"}
    if unknown:
        raise GraphError(f"unknown top-level key(s) {sorted(unknown)}")
    raw_tensors = doc.get("tensors")
    raw_nodes = doc.get("nodes")
    if not isinstance(raw_tensors, dict) or not isinstance(raw_nodes, list):
        raise GraphError("graph document needs 'tensors' (object) and 'nodes' (list)")
    tensors = {str(tid): _parse_shape(tid, raw) for tid, raw in raw_tensors.items()}

    nodes = []
    for raw in raw_nodes:
        if not isinstance(raw, dict):
            raise GraphError("every node must be an object")
        unknown = set(raw) - {"id", "kind", "attrs", "src", "dst"}
        if unknown:
            raise GraphError(f"unknown node key(s) {sorted(unknown)}")
        try:
            node_id = str(raw["id"])
            kind_name = raw["kind"]
            src, dst = raw["src"], raw["dst"]
        except KeyError as exc:
            raise GraphError(f"node is missing key {exc}") from None
        try:
            kind = OpKind(kind_name)
        except ValueError:
            raise GraphError(f"node {node_id}: unknown operation kind {kind_name!r}") from None
        if not isinstance(src, list) or not isinstance(dst, list):
            raise GraphError(f"node {node_id}: src and dst must be lists")
        attrs = _parse_attrs(kind, raw.get("attrs"), node_id)
        nodes.append(OperationNode(node_id, kind, attrs, tuple(map(str, src)), tuple(map(str, dst))))

    inputs = tuple(map(str, doc.get("inputs", [])))
    outputs = tuple(map(str, doc.get("outputs", [])))
    return ComputationalGraph(tensors, tuple(nodes), inputs, outputs)


def parse_graph(document: str) -> ComputationalGraph:
    """Parse a graph document, sort it topologically and validate it.

    Raises GraphError for malformed JSON, unknown kinds or attributes, dangling
    tensor references, tensors with two producers, cycles, and any other
    violation reported by :func:`validate`.
    """
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise GraphError(f"malformed graph document: {exc}") from None
    graph = graph_from_dict(doc)
    graph = replace(graph, nodes=topological_order(graph))
    violations = validate(graph)
    if violations:
        raise GraphError("invalid graph: " + "; ".join(map(str, violations)))
    return graph


def load_graph(path) -> ComputationalGraph:
    with open(path, encoding="utf-8") as fh:
        return parse_graph(fh.read())


def _attrs_to_dict(attrs) -> dict:
    return {f.name: getattr(attrs, f.name) for f in fields(attrs)}


def graph_to_dict(graph: ComputationalGraph) -> dict:
    if any(n.linked for n in graph.nodes):
        raise GraphError("fused graphs have no file representation; serialize the original graph")
    tensors = {}
    for tid, shape in graph.tensors.items():
        tensors[tid] = None if shape is None else {"h": shape.height, "w": shape.width, "c": shape.channels}
    nodes = [
        {"id": n.id, "kind": n.kind.value, "attrs": _attrs_to_dict(n.attrs),
         "src": list(n.src), "dst": list(n.dst)}
        for n in graph.nodes
    ]
    return {"tensors": tensors, "nodes": nodes, "inputs": list(graph.inputs), "outputs": list(graph.outputs)}


def serialize_graph(graph: ComputationalGraph) -> str:
    return json.dumps(graph_to_dict(graph), indent=1)


# ---------------------------------------------------------------------------
# Structure
# ---------------------------------------------------------------------------

def topological_order(graph: ComputationalGraph) -> tuple[OperationNode, ...]:
    """Kahn's algorithm; ties broken by document order, then node id.

    Raises GraphError on dangling references, duplicate producers or cycles.
    """
    producer: dict[str, int] = {}
    for pos, n in enumerate(graph.nodes):
        for t in n.src + n.dst:
            if t not in graph.tensors:
                raise GraphError(f"node {n.id}: dangling reference to tensor {t!r}")
        for t in n.dst:
            if t in producer:
                raise GraphError(f"tensor {t!r} has two producers")
            producer[t] = pos

    deps = [set() for _ in graph.nodes]
    users: list[list[int]] = [[] for _ in graph.nodes]
    for pos, n in enumerate(graph.nodes):
        for t in n.src:
            p = producer.get(t)
            if p is not None and p not in deps[pos]:
                deps[pos].add(p)
                users[p].append(pos)

    pending = [len(d) for d in deps]
    heap = [(pos, n.id) for pos, n in enumerate(graph.nodes) if pending[pos] == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        pos, _ = heapq.heappop(heap)
        order.append(graph.nodes[pos])
        for u in users[pos]:
            pending[u] -= 1
            if pending[u] == 0:
                heapq.heappush(heap, (u, graph.nodes[u].id))
    if len(order) != len(graph.nodes):
        stuck = sorted(n.id for pos, n in enumerate(graph.nodes) if pending[pos] > 0)
        raise GraphError(f"cycle detected among nodes {stuck}")
    return tuple(order)


def _check_attrs(n: OperationNode, in_shape: Optional[TensorShape]) -> Iterable[str]:
    a = n.attrs
    for f in fields(a):
        v = getattr(a, f.name)
        if f.type == "int" and isinstance(v, int) and v < (0 if n.kind is OpKind.PADDING else 1):
            yield f"attribute {f.name} must be positive, got {v}"
    if n.kind in (OpKind.CONV2D, OpKind.DEPTHWISE_CONV2D) and a.padding not in ("same", "valid"):
        yield f"padding must be 'same' or 'valid', got {a.padding!r}"
    if n.kind is OpKind.CONV2D and a.groups >= 1:
        if a.filters % a.groups:
            yield f"groups must divide filters ({a.groups} does not divide {a.filters})"
        if in_shape is not None and in_shape.channels % a.groups:
            yield (f"groups must divide input channels "
                   f"({a.groups} does not divide {in_shape.channels})")
    if n.kind is OpKind.POOLING and a.pool not in ("avg", "max"):
        yield f"pool must be 'avg' or 'max', got {a.pool!r}"
    if n.kind is OpKind.ELEMENTWISE:
        if a.op not in ELEMENTWISE_OPS:
            yield f"unknown element-wise op {a.op!r}"
        else:
            arity = 1 if a.op in UNARY_ELEMENTWISE else 2
            if len(n.src) != arity:
                yield f"element-wise {a.op} takes {arity} source tensor(s), got {len(n.src)}"
    if n.kind is OpKind.ACTIVATION and a.fn not in ACTIVATION_FNS:
        yield f"unknown activation {a.fn!r}"
    if n.kind is OpKind.SPLIT:
        if a.count >= 1 and len(n.dst) != a.count:
            yield f"split count {a.count} but {len(n.dst)} destination tensors"
        if in_shape is not None and a.count >= 1 and in_shape.channels % a.count:
            yield f"split count {a.count} does not divide {in_shape.channels} channels"
    elif len(n.dst) != 1:
        yield f"{n.kind.value} must produce exactly one tensor, got {len(n.dst)}"
    if n.kind is OpKind.CONCAT and len(n.src) < 1:
        yield "concat needs at least one source"
    if n.kind not in (OpKind.CONCAT, OpKind.ELEMENTWISE) and len(n.src) != 1:
        yield f"{n.kind.value} takes exactly one source tensor, got {len(n.src)}"


def validate(graph: ComputationalGraph) -> list[Violation]:
    """Return every invariant violation found in ``graph``; never raises."""
    out: list[Violation] = []
    seen_ids: set[str] = set()
    producer: dict[str, str] = {}
    for n in graph.nodes:
        if n.id in seen_ids:
            out.append(Violation(n.id, "duplicate node id"))
        seen_ids.add(n.id)
        if not n.src:
            out.append(Violation(n.id, "node has no source tensors"))
        if not n.dst:
            out.append(Violation(n.id, "node has no destination tensors"))
        for t in n.src + n.dst:
            if t not in graph.tensors:
                out.append(Violation(n.id, f"dangling reference to tensor {t!r}"))
        for t in n.dst:
            if t in producer:
                out.append(Violation(t, f"tensor produced by both {producer[t]} and {n.id}"))
            else:
                producer[t] = n.id
        in_shape = graph.tensors.get(n.src[0]) if n.src else None
        out.extend(Violation(n.id, msg) for msg in _check_attrs(n, in_shape))

    for t in graph.inputs:
        if t not in graph.tensors:
            out.append(Violation(t, "graph input is not a declared tensor"))
        elif t in producer:
            out.append(Violation(t, "graph input is produced by a node"))
    for t in graph.outputs:
        if t not in graph.tensors:
            out.append(Violation(t, "graph output is not a declared tensor"))

    # Order check doubles as the acyclicity check: a cycle cannot be ordered.
    done: set[str] = set()
    for n in graph.nodes:
        for t in n.src:
            p = producer.get(t)
            if p is not None and p not in done:
                out.append(Violation(n.id, f"consumes {t!r} before its producer {p} (order or cycle)"))
        done.add(n.id)
    return out


# ---------------------------------------------------------------------------
# Shapes
# ---------------------------------------------------------------------------

def conv_output_extent(size: int, kernel: int, stride: int, padding: str) -> int:
    if padding == "same":
        return math.ceil(size / stride)
    return (size - kernel) // stride + 1


def _infer_node(n: OperationNode, ins: list[TensorShape]) -> list[TensorShape]:
    x = ins[0]
    a = n.attrs
    k = n.kind
    if k in (OpKind.CONV2D, OpKind.DEPTHWISE_CONV2D):
        h = conv_output_extent(x.height, a.kernel_h, a.stride, a.padding)
        w = conv_output_extent(x.width, a.kernel_w, a.stride, a.padding)
        if h < 1 or w < 1:
            raise ShapeError(f"node {n.id}: kernel larger than input")
        if k is OpKind.CONV2D:
            if x.channels % a.groups:
                raise ShapeError(f"node {n.id}: groups {a.groups} do not divide {x.channels} channels")
            return [TensorShape(h, w, a.filters)]
        return [TensorShape(h, w, x.channels)]
    if k is OpKind.POOLING:
        return [TensorShape(math.ceil(x.height / a.stride), math.ceil(x.width / a.stride), x.channels)]
    if k is OpKind.FULLY_CONNECTED:
        return [TensorShape(1, 1, a.filters)]
    if k is OpKind.MEAN:
        return [TensorShape(1, 1, x.channels)]
    if k is OpKind.PADDING:
        return [TensorShape(x.height + 2 * a.pad_h, x.width + 2 * a.pad_w, x.channels)]
    if k is OpKind.SPLIT:
        if x.channels % a.count:
            raise ShapeError(f"node {n.id}: split count {a.count} does not divide {x.channels} channels")
        return [TensorShape(x.height, x.width, x.channels // a.count)] * a.count
    if k is OpKind.CONCAT:
        if any((s.height, s.width) != (x.height, x.width) for s in ins):
            raise ShapeError(f"node {n.id}: concat inputs differ in spatial size")
        return [TensorShape(x.height, x.width, sum(s.channels for s in ins))]
    if k is OpKind.ELEMENTWISE and len(ins) == 2:
        y = ins[1]
        broadcastable = y == x or (y.height == 1 and y.width == 1 and y.channels in (1, x.channels))
        if not broadcastable:
            raise ShapeError(f"node {n.id}: cannot broadcast {y} onto {x}")
    return [x]


def infer_shapes(graph: ComputationalGraph) -> ComputationalGraph:
    """Populate every tensor shape.

    Declared shapes must agree with inferred ones.  Requires a topologically
    ordered graph whose source tensors of the first consumers have shapes.
    """
    tensors = dict(graph.tensors)
    for n in graph.nodes:
        ins = []
        for t in n.src:
            s = tensors.get(t)
            if s is None:
                raise ShapeError(f"node {n.id}: input tensor {t!r} has no shape")
            ins.append(s)
        outs = _infer_node(n, ins)
        if len(outs) != len(n.dst):
            raise ShapeError(f"node {n.id}: produces {len(outs)} tensors but lists {len(n.dst)}")
        for t, s in zip(n.dst, outs):
            declared = tensors.get(t)
            if declared is not None and declared != s:
                raise ShapeError(f"tensor {t!r}: declared {declared} but inferred {s}")
            tensors[t] = s
    return replace(graph, tensors=tensors)
