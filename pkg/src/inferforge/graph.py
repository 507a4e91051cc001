"""Model graph: an ordered list of layers with shape propagation.

Six layer kinds are supported, enough to express small sequential CNN
classifiers: Dense, Conv2D (valid padding, unit dilation), ReLU, MaxPool2D,
Flatten, Softmax. Spatial tensors are laid out height x width x channels;
Conv2D kernels are stored [out_channels, in_channels, kh, kw].
"""

from __future__ import annotations

from dataclasses import dataclass, field

from inferforge.errors import GraphValidationError
from inferforge.tensor import TensorBlob

LAYER_KINDS = ("Dense", "Conv2D", "ReLU", "MaxPool2D", "Flatten", "Softmax")

# params each kind requires; parameterless kinds carry no weights
_REQUIRED_PARAMS = {
    "Dense": ("in_dim", "out_dim"),
    "Conv2D": ("kernel_h", "kernel_w", "in_channels", "out_channels", "stride"),
    "MaxPool2D": ("pool_h", "pool_w", "stride"),
    "ReLU": (),
    "Flatten": (),
    "Softmax": (),
}


@dataclass
class Layer:
    kind: str
    params: dict = field(default_factory=dict)
    weights: list[TensorBlob] = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise GraphValidationError(f"unknown layer kind {self.kind!r}")
        required = _REQUIRED_PARAMS[self.kind]
        for p in required:
            v = self.params.get(p)
            if not isinstance(v, int) or v < 1:
                raise GraphValidationError(
                    f"{self.kind} needs positive integer param {p!r}, got {v!r}"
                )
        extra = set(self.params) - set(required)
        if extra:
            raise GraphValidationError(f"{self.kind} got unexpected params {sorted(extra)}")


@dataclass
class ModelGraph:
    """Neutral model representation: name, per-sample input shape, layers.

    Immutable by convention after load; nothing mutates a graph in place, so
    one instance can be shared freely across threads.
    """

    name: str
    input_shape: tuple[int, ...]
    layers: list[Layer]
    output_dim: int

    def __post_init__(self):
        self.input_shape = tuple(int(d) for d in self.input_shape)

    def weight_tensors(self):
        """Iterate (layer_index, TensorBlob) over all weights in layer order."""
        for i, layer in enumerate(self.layers):
            for blob in layer.weights:
                yield i, blob


def _shape_product(shape) -> int:
    n = 1
    for d in shape:
        n *= d
    return n


def _conv_out(in_size: int, k: int, stride: int) -> int:
    return (in_size - k) // stride + 1


def _layer_output_shape(layer: Layer, in_shape: tuple[int, ...], idx: int) -> tuple[int, ...]:
    kind = layer.kind
    p = layer.params
    if kind == "Dense":
        if in_shape != (p["in_dim"],):
            raise GraphValidationError(
                f"Dense expects input shape ({p['in_dim']},), got {in_shape}", idx)
        return (p["out_dim"],)
    if kind == "Conv2D":
        if len(in_shape) != 3:
            raise GraphValidationError(
                f"Conv2D expects rank-3 input (h, w, channels), got {in_shape}", idx)
        h, w, c = in_shape
        if c != p["in_channels"]:
            raise GraphValidationError(
                f"Conv2D expects {p['in_channels']} input channels, got {c}", idx)
        if h < p["kernel_h"] or w < p["kernel_w"]:
            raise GraphValidationError(
                f"Conv2D kernel {p['kernel_h']}x{p['kernel_w']} larger than input {h}x{w}", idx)
        return (_conv_out(h, p["kernel_h"], p["stride"]),
                _conv_out(w, p["kernel_w"], p["stride"]),
                p["out_channels"])
    if kind == "MaxPool2D":
        if len(in_shape) != 3:
            raise GraphValidationError(
                f"MaxPool2D expects rank-3 input (h, w, channels), got {in_shape}", idx)
        h, w, c = in_shape
        if h < p["pool_h"] or w < p["pool_w"]:
            raise GraphValidationError(
                f"MaxPool2D window {p['pool_h']}x{p['pool_w']} larger than input {h}x{w}", idx)
        return (_conv_out(h, p["pool_h"], p["stride"]),
                _conv_out(w, p["pool_w"], p["stride"]),
                c)
    if kind == "ReLU":
        return in_shape
    if kind == "Flatten":
        return (_shape_product(in_shape),)
    if kind == "Softmax":
        if len(in_shape) != 1:
            raise GraphValidationError(
                f"Softmax expects rank-1 input, got {in_shape}", idx)
        return in_shape
    raise GraphValidationError(f"unknown layer kind {kind!r}", idx)


def _check_weights(layer: Layer, idx: int) -> None:
    kind = layer.kind
    p = layer.params
    if kind == "Dense":
        expected = [("weight", (p["out_dim"], p["in_dim"])), ("bias", (p["out_dim"],))]
    elif kind == "Conv2D":
        expected = [
            ("kernel", (p["out_channels"], p["in_channels"], p["kernel_h"], p["kernel_w"])),
            ("bias", (p["out_channels"],)),
        ]
    else:
        if layer.weights:
            raise GraphValidationError(f"{kind} must not carry weights", idx)
        return
    if len(layer.weights) != len(expected):
        raise GraphValidationError(
            f"{kind} needs {len(expected)} weight tensors, got {len(layer.weights)}", idx)
    for blob, (role, shape) in zip(layer.weights, expected):
        if blob.shape != shape:
            raise GraphValidationError(
                f"{kind} {role} shape {blob.shape} inconsistent with params (expected {shape})",
                idx)


def validate_graph(graph: ModelGraph) -> list[tuple[int, ...]]:
    """Propagate shapes through the graph; return the per-layer output shapes.

    Raises GraphValidationError with the offending layer index at the first
    mismatch. Also checks weight tensor shapes against layer params and that
    the final output is rank-1 of length ``output_dim``.
    """
    if not graph.layers:
        raise GraphValidationError("empty graph")
    if not graph.input_shape or any(d < 1 for d in graph.input_shape):
        raise GraphValidationError(f"invalid input shape {graph.input_shape}")
    trace = []
    shape = graph.input_shape
    for i, layer in enumerate(graph.layers):
        _check_weights(layer, i)
        shape = _layer_output_shape(layer, shape, i)
        trace.append(shape)
    if shape != (graph.output_dim,):
        raise GraphValidationError(
            f"final output shape {shape} does not match output_dim {graph.output_dim}")
    return trace
