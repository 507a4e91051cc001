"""Reference interpreter: runs a ModelGraph layer by layer.

This is the execution kernel behind every serving precision. Variants plug in
through two hooks: ``weights`` overrides the per-layer weight arrays (already
transformed), and ``act_transform`` rewrites each layer output (fake-quant or
half-precision rounding). Plain FP32 inference uses neither.

Inference is strictly per sample: a batch is a Python loop over samples, so a
batch of N is bit-identical to concatenating N single-sample runs.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from inferforge import engine
from inferforge.graph import ModelGraph, validate_graph
from inferforge.tensor import TensorBlob

ActTransform = Callable[[int, np.ndarray], np.ndarray]
Observer = Callable[[int, np.ndarray], None]


def resolve_weights(graph: ModelGraph) -> list[list[np.ndarray]]:
    """Per-layer float32 weight arrays, decoded once per run."""
    out = []
    for layer in graph.layers:
        out.append([np.asarray(b.to_numpy(), dtype=np.float32) for b in layer.weights])
    return out


def _apply_layer(layer, weights: list[np.ndarray], x: np.ndarray) -> np.ndarray:
    kind = layer.kind
    p = layer.params
    if kind == "Dense":
        return engine.dense(x, weights[0], weights[1])
    if kind == "Conv2D":
        return engine.conv2d(x, weights[0], weights[1], p["stride"])
    if kind == "ReLU":
        return np.maximum(x, np.float32(0.0))
    if kind == "MaxPool2D":
        return engine.maxpool2d(x, p["pool_h"], p["pool_w"], p["stride"])
    if kind == "Flatten":
        return np.ascontiguousarray(x).reshape(-1)
    if kind == "Softmax":
        z = x - x.max()
        e = np.exp(z)
        return e / e.sum()
    raise ValueError(f"unknown layer kind {kind!r}")


def run_sample(graph: ModelGraph, sample: np.ndarray,
               weights: list[list[np.ndarray]] | None = None,
               act_transform: ActTransform | None = None,
               observer: Observer | None = None) -> np.ndarray:
    """Run one sample through the graph; returns the rank-1 output vector."""
    if weights is None:
        weights = resolve_weights(graph)
    x = np.asarray(sample, dtype=np.float32)
    for i, layer in enumerate(graph.layers):
        x = _apply_layer(layer, weights[i], x)
        if act_transform is not None:
            x = act_transform(i, x)
        if observer is not None:
            observer(i, x)
    return x


def run_batch(graph: ModelGraph, batch: np.ndarray,
              weights: list[list[np.ndarray]] | None = None,
              act_transform: ActTransform | None = None,
              observer: Observer | None = None) -> np.ndarray:
    """Run a [batch, *input_shape] float32 array; returns [batch, output_dim]."""
    batch = np.asarray(batch)
    if batch.dtype != np.float32:
        raise ValueError(f"batch dtype must be float32, got {batch.dtype}")
    if batch.ndim != len(graph.input_shape) + 1:
        raise ValueError(
            f"batch must have shape [n, *{list(graph.input_shape)}], got {list(batch.shape)}")
    if tuple(batch.shape[1:]) != graph.input_shape:
        raise ValueError(
            f"per-sample shape {list(batch.shape[1:])} does not match "
            f"model input shape {list(graph.input_shape)}")
    if weights is None:
        weights = resolve_weights(graph)
    out = np.empty((batch.shape[0], graph.output_dim), dtype=np.float32)
    for b in range(batch.shape[0]):
        out[b] = run_sample(graph, batch[b], weights, act_transform, observer)
    return out


def infer_fp32(graph: ModelGraph, batch: TensorBlob) -> TensorBlob:
    """Deterministic FP32 reference inference over a batched tensor blob."""
    validate_graph(graph)
    if batch.dtype != "f32":
        raise ValueError(f"batch dtype must be f32, got {batch.dtype}")
    result = run_batch(graph, batch.to_numpy())
    return TensorBlob.from_numpy("output", result)
