"""Synthetic demo models and datasets.

Nothing here is trained; weights are seeded uniform noise. The factories
exist so the CLI, the benchmarks, and the tests can exercise the pipeline on
models spanning a wide range of layer counts and weight sizes.
"""

from __future__ import annotations

import numpy as np

from inferforge.graph import Layer, ModelGraph
from inferforge.quant import CalibrationSet
from inferforge.tensor import TensorBlob


def _uniform(rng: np.random.Generator, shape, low: float, high: float) -> np.ndarray:
    return rng.uniform(low, high, size=shape).astype(np.float32)


def _dense(rng, name, in_dim, out_dim, low, high) -> Layer:
    return Layer(kind="Dense", params={"in_dim": in_dim, "out_dim": out_dim}, weights=[
        TensorBlob.from_numpy(f"{name}.weight", _uniform(rng, (out_dim, in_dim), low, high)),
        TensorBlob.from_numpy(f"{name}.bias", _uniform(rng, (out_dim,), low, high)),
    ])


def _conv(rng, name, kh, kw, cin, cout, stride, low, high) -> Layer:
    params = {"kernel_h": kh, "kernel_w": kw, "in_channels": cin,
              "out_channels": cout, "stride": stride}
    return Layer(kind="Conv2D", params=params, weights=[
        TensorBlob.from_numpy(f"{name}.kernel", _uniform(rng, (cout, cin, kh, kw), low, high)),
        TensorBlob.from_numpy(f"{name}.bias", _uniform(rng, (cout,), low, high)),
    ])


def lenet_like(name: str = "lenet", seed: int = 0, classes: int = 10,
               weight_low: float = -0.5, weight_high: float = 0.5) -> ModelGraph:
    """Classic small CNN: two conv/pool stages and three dense stages."""
    rng = np.random.default_rng(seed)
    lo, hi = weight_low, weight_high
    layers = [
        _conv(rng, "conv1", 5, 5, 1, 6, 1, lo, hi),          # 28x28x1 -> 24x24x6
        Layer(kind="ReLU"),
        Layer(kind="MaxPool2D", params={"pool_h": 2, "pool_w": 2, "stride": 2}),
        _conv(rng, "conv2", 5, 5, 6, 16, 1, lo, hi),         # 12x12x6 -> 8x8x16
        Layer(kind="ReLU"),
        Layer(kind="MaxPool2D", params={"pool_h": 2, "pool_w": 2, "stride": 2}),
        Layer(kind="Flatten"),                               # 4x4x16 -> 256
        _dense(rng, "fc1", 256, 120, lo, hi),
        Layer(kind="ReLU"),
        _dense(rng, "fc2", 120, 84, lo, hi),
        Layer(kind="ReLU"),
        _dense(rng, "fc3", 84, classes, lo, hi),
        Layer(kind="Softmax"),
    ]
    return ModelGraph(name=name, input_shape=(28, 28, 1), layers=layers,
                      output_dim=classes)


def image_classifier(name: str, conv_depth: int, width: int, dense_width: int = 64,
                     input_shape: tuple[int, int, int] = (24, 24, 3),
                     classes: int = 10, seed: int = 0,
                     pool_every: int = 8) -> ModelGraph:
    """Parametric conv tower: one 3x3 stem then 1x1 convs, pooled periodically.

    ``conv_depth`` controls the layer count, ``width``/``dense_width`` the
    weight volume, so build-time scaling across model sizes is controllable.
    """
    rng = np.random.default_rng(seed)
    h, w, cin = input_shape
    # fan-in scaled bounds keep activations in a sane range at any depth
    layers = []
    bound = float(np.sqrt(3.0 / (9 * cin)))
    layers.append(_conv(rng, "stem", 3, 3, cin, width, 1, -bound, bound))
    layers.append(Layer(kind="ReLU"))
    h, w = h - 2, w - 2
    bound = float(np.sqrt(3.0 / width))
    for i in range(conv_depth - 1):
        layers.append(_conv(rng, f"conv{i}", 1, 1, width, width, 1, -bound, bound))
        layers.append(Layer(kind="ReLU"))
        if (i + 1) % pool_every == 0 and min(h, w) >= 8:
            layers.append(Layer(kind="MaxPool2D",
                                params={"pool_h": 2, "pool_w": 2, "stride": 2}))
            h, w = (h - 2) // 2 + 1, (w - 2) // 2 + 1
    layers.append(Layer(kind="Flatten"))
    flat = h * w * width
    bound = float(np.sqrt(3.0 / flat))
    layers.append(_dense(rng, "head1", flat, dense_width, -bound, bound))
    layers.append(Layer(kind="ReLU"))
    bound = float(np.sqrt(3.0 / dense_width))
    layers.append(_dense(rng, "head2", dense_width, classes, -bound, bound))
    layers.append(Layer(kind="Softmax"))
    return ModelGraph(name=name, input_shape=input_shape, layers=layers,
                      output_dim=classes)


def identity_dense(name: str = "identity", dim: int = 3) -> ModelGraph:
    """Dense layer with identity weights and zero bias; output equals input."""
    layer = Layer(kind="Dense", params={"in_dim": dim, "out_dim": dim}, weights=[
        TensorBlob.from_numpy("id.weight", np.eye(dim, dtype=np.float32)),
        TensorBlob.from_numpy("id.bias", np.zeros(dim, dtype=np.float32)),
    ])
    return ModelGraph(name=name, input_shape=(dim,), layers=[layer], output_dim=dim)


def random_calibration(graph: ModelGraph, count: int = 8, seed: int = 0,
                       low: float = 0.0, high: float = 1.0) -> CalibrationSet:
    """Uniform random inputs matching the graph's input shape."""
    rng = np.random.default_rng(seed)
    samples = [
        TensorBlob.from_numpy(f"sample{i}",
                              _uniform(rng, graph.input_shape, low, high))
        for i in range(count)
    ]
    return CalibrationSet(samples=samples)
