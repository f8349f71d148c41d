"""Latency prediction for neural networks on mobile CPUs and GPUs."""
from .gpu_compile import GpuInfo, Kernel, KernelKind, KernelSequence, VendorClass, compile_graph
from .graph import ComputationalGraph, GraphError, OperationNode, OpKind, TensorShape, parse_graph
from .latency import LatencyPrediction, estimate_overhead, predict_end_to_end
from .scenario import ScenarioKey

__version__ = "0.1.0"

__all__ = [
    "ComputationalGraph", "GpuInfo", "GraphError", "Kernel", "KernelKind", "KernelSequence",
    "LatencyPrediction", "OpKind", "OperationNode", "ScenarioKey", "TensorShape", "VendorClass",
    "compile_graph", "estimate_overhead", "parse_graph", "predict_end_to_end",
]
