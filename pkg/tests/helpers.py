"""Small graph builders shared by the tests."""
import json

from mobilat.graph import infer_shapes, parse_graph


def conv(node_id, src, dst, filters=64, k=3, stride=1, groups=1, padding="same"):
    return {"id": node_id, "kind": "conv2d",
            "attrs": {"kernel_h": k, "kernel_w": k, "stride": stride, "groups": groups,
                      "filters": filters, "padding": padding},
            "src": [src], "dst": [dst]}


def relu(node_id, src, dst):
    return {"id": node_id, "kind": "activation", "attrs": {"fn": "relu"}, "src": [src], "dst": [dst]}


def ew(node_id, op, src, dst):
    return {"id": node_id, "kind": "elementwise", "attrs": {"op": op}, "src": list(src), "dst": [dst]}


def doc(nodes, input_shape=(56, 56, 64), inputs=("x",), outputs=None):
    tensors = {}
    for n in nodes:
        for t in n["src"] + n["dst"]:
            tensors.setdefault(t, None)
    for t in inputs:
        tensors[t] = {"h": input_shape[0], "w": input_shape[1], "c": input_shape[2]}
    if outputs is None:
        outputs = [nodes[-1]["dst"][0]] if nodes else []
    return {"tensors": tensors, "nodes": nodes, "inputs": list(inputs), "outputs": list(outputs)}


def build(nodes, **kw):
    return infer_shapes(parse_graph(json.dumps(doc(nodes, **kw))))
