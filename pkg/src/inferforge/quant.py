"""Model conversion: calibration, INT8 quantization, FP16 rounding.

Scheme: per-tensor min/max calibration; weights quantized symmetric, layer
activations affine; round-half-to-even everywhere. INT8 execution is
fake-quant emulation (weights and activations take a quantize/dequantize
round trip, arithmetic stays in float32). Quantization arithmetic itself is
done in float64 so the half-step round-trip bound holds exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from inferforge.engine import interpreter
from inferforge.errors import (
    CalibrationRequiredError,
    ModelPackageError,
    QuantizationError,
)
from inferforge.graph import Layer, ModelGraph, validate_graph
from inferforge.model_io import load_model_manifest, save_model
from inferforge.tensor import TensorBlob, read_container, write_container

PRECISIONS = ("FP32", "FP16", "INT8")

QMIN = -128
QMAX = 127

FP16_MAX = 65504.0

QPARAMS_JSON = "qparams.json"
CALIB_JSON = "calib.json"
CALIB_BIN = "calib.bin"


@dataclass(frozen=True)
class QuantParams:
    scale: float
    zero_point: int
    mode: str  # "symmetric" | "affine"
    qmin: int = QMIN
    qmax: int = QMAX

    def __post_init__(self):
        if self.mode not in ("symmetric", "affine"):
            raise QuantizationError(f"unknown quantization mode {self.mode!r}")
        if not np.isfinite(self.scale) or self.scale <= 0:
            raise QuantizationError(f"scale must be positive and finite, got {self.scale}")
        if self.mode == "symmetric" and self.zero_point != 0:
            raise QuantizationError("symmetric mode forces zero_point = 0")
        if not self.qmin <= self.zero_point <= self.qmax:
            raise QuantizationError(
                f"zero_point {self.zero_point} outside [{self.qmin}, {self.qmax}]")


@dataclass
class CalibrationSet:
    """Representative inputs used to derive activation ranges."""

    samples: list[TensorBlob]

    def __post_init__(self):
        if not self.samples:
            raise QuantizationError("calibration set must contain at least one sample")
        for s in self.samples:
            if s.dtype != "f32":
                raise QuantizationError(f"calibration sample {s.name!r} must be f32")
        first = self.samples[0].shape
        for s in self.samples[1:]:
            if s.shape != first:
                raise QuantizationError(
                    f"calibration samples disagree on shape: {first} vs {s.shape}")

    @property
    def count(self) -> int:
        return len(self.samples)

    @property
    def sample_shape(self) -> tuple[int, ...]:
        return self.samples[0].shape


@dataclass
class CalibrationRanges:
    """Observed value ranges: one (lo, hi) per layer output and per weight tensor."""

    activations: list[tuple[float, float]]
    weights: dict[str, tuple[float, float]]


@dataclass
class ConvertedVariant:
    base_graph: ModelGraph
    precision: str
    target: str
    quantized_weights: list[list[TensorBlob]]
    weight_qparams: dict[str, QuantParams] = field(default_factory=dict)
    activation_qparams: list[QuantParams] = field(default_factory=list)

    def __post_init__(self):
        if self.precision not in PRECISIONS:
            raise QuantizationError(f"unknown precision {self.precision!r}")
        if self.precision == "INT8":
            names = {b.name for _, b in self.base_graph.weight_tensors()}
            missing = names - set(self.weight_qparams)
            if missing:
                raise QuantizationError(f"missing weight qparams for {sorted(missing)}")
            if len(self.activation_qparams) != len(self.base_graph.layers):
                raise QuantizationError(
                    f"need activation qparams for all {len(self.base_graph.layers)} layers, "
                    f"got {len(self.activation_qparams)}")


def quant_params(lo: float, hi: float, mode: str) -> QuantParams:
    """Derive scale/zero-point for a value range.

    Symmetric: scale = max(|lo|, |hi|) / 127, zero_point 0. Affine: scale =
    (hi - lo) / 255, zero_point = round(-128 - lo/scale) clamped to int8.
    A degenerate range (lo == hi) gets scale 1.
    """
    lo = float(lo)
    hi = float(hi)
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise QuantizationError(f"range must be finite, got ({lo}, {hi})")
    if lo > hi:
        raise QuantizationError(f"range min {lo} exceeds max {hi}")
    if mode not in ("symmetric", "affine"):
        raise QuantizationError(f"unknown quantization mode {mode!r}")

    if lo == hi:
        scale = 1.0
        zp = 0 if mode == "symmetric" else int(np.clip(np.rint(-lo), QMIN, QMAX))
        return QuantParams(scale=scale, zero_point=zp, mode=mode)

    if mode == "symmetric":
        return QuantParams(scale=max(abs(lo), abs(hi)) / 127.0, zero_point=0, mode=mode)

    scale = (hi - lo) / 255.0
    zp = int(np.clip(np.rint(-128.0 - lo / scale), QMIN, QMAX))
    return QuantParams(scale=scale, zero_point=zp, mode=mode)


def quantize_array(arr: np.ndarray, qp: QuantParams) -> np.ndarray:
    """q = clamp(round_half_even(x / scale) + zero_point, -128, 127), as int8."""
    q = np.rint(np.asarray(arr, dtype=np.float64) / qp.scale) + qp.zero_point
    return np.clip(q, qp.qmin, qp.qmax).astype(np.int8)


def dequantize_array(q: np.ndarray, qp: QuantParams) -> np.ndarray:
    """x = (q - zero_point) * scale, as float32."""
    x = (np.asarray(q, dtype=np.float64) - qp.zero_point) * qp.scale
    return x.astype(np.float32)


def fake_quant_array(arr: np.ndarray, qp: QuantParams) -> np.ndarray:
    return dequantize_array(quantize_array(arr, qp), qp)


def quantize_tensor(t: TensorBlob, qp: QuantParams) -> TensorBlob:
    if t.dtype != "f32":
        raise QuantizationError(f"quantize_tensor expects f32 input, got {t.dtype}")
    return TensorBlob.from_numpy(t.name, quantize_array(t.to_numpy(), qp), dtype="i8")


def dequantize_tensor(q: TensorBlob, qp: QuantParams) -> TensorBlob:
    if q.dtype != "i8":
        raise QuantizationError(f"dequantize_tensor expects i8 input, got {q.dtype}")
    return TensorBlob.from_numpy(q.name, dequantize_array(q.to_numpy(), qp), dtype="f32")


def round_fp16_array(arr: np.ndarray) -> np.ndarray:
    """Project float32 values onto binary16 (round-to-nearest-even).

    Overflowing finite values saturate to +-65504 instead of becoming
    infinite; non-finite inputs pass through unchanged.
    """
    arr = np.asarray(arr, dtype=np.float32)
    with np.errstate(over="ignore"):
        out = arr.astype(np.float16).astype(np.float32)
    overflow = np.isinf(out) & np.isfinite(arr)
    if overflow.any():
        out = np.where(overflow, np.copysign(np.float32(FP16_MAX), arr), out)
    return out.astype(np.float32)


def round_fp16(t: TensorBlob) -> TensorBlob:
    if t.dtype != "f32":
        raise QuantizationError(f"round_fp16 expects f32 input, got {t.dtype}")
    return TensorBlob.from_numpy(t.name, round_fp16_array(t.to_numpy()), dtype="f32")


def calibrate(graph: ModelGraph, calib: CalibrationSet) -> CalibrationRanges:
    """Observe per-layer output ranges on FP32 inference plus exact weight ranges.

    Activation ranges are the elementwise min/max over every layer output
    across all samples; permutation of the samples cannot change them.
    """
    validate_graph(graph)
    if calib.sample_shape != graph.input_shape:
        raise QuantizationError(
            f"calibration sample shape {list(calib.sample_shape)} does not match "
            f"model input shape {list(graph.input_shape)}")

    n_layers = len(graph.layers)
    lows = [np.inf] * n_layers
    highs = [-np.inf] * n_layers

    def observe(idx: int, out: np.ndarray) -> None:
        lows[idx] = min(lows[idx], float(out.min()))
        highs[idx] = max(highs[idx], float(out.max()))

    weights = interpreter.resolve_weights(graph)
    for sample in calib.samples:
        interpreter.run_sample(graph, sample.to_numpy(), weights, observer=observe)

    weight_ranges = {}
    for _, blob in graph.weight_tensors():
        arr = blob.to_numpy()
        weight_ranges[blob.name] = (float(arr.min()), float(arr.max()))
    return CalibrationRanges(activations=list(zip(lows, highs)), weights=weight_ranges)


def convert(graph: ModelGraph, target, calib: CalibrationSet | None = None,
            precision: str | None = None) -> ConvertedVariant:
    """Produce the per-target variant of ``graph``.

    ``target`` is a TargetProfile; ``precision`` picks one of its allowed
    precisions (defaults to the profile's default). INT8 requires ``calib``.
    """
    validate_graph(graph)
    resolved = target.resolve_precision(precision)

    if resolved == "FP32":
        # passthrough still re-encodes every tensor (bit-identical) the way a
        # real format transcode would
        qweights = [[TensorBlob.from_numpy(b.name, b.to_numpy(), dtype=b.dtype)
                     for b in layer.weights] for layer in graph.layers]
        return ConvertedVariant(base_graph=graph, precision="FP32", target=target.name,
                                quantized_weights=qweights)

    if resolved == "FP16":
        qweights = [[round_fp16(b) for b in layer.weights] for layer in graph.layers]
        return ConvertedVariant(base_graph=graph, precision="FP16", target=target.name,
                                quantized_weights=qweights)

    # INT8
    if calib is None:
        raise CalibrationRequiredError(
            f"calibration dataset required for INT8 target {target.name!r}")
    ranges = calibrate(graph, calib)
    weight_qparams = {}
    qweights = []
    for layer in graph.layers:
        row = []
        for blob in layer.weights:
            lo, hi = ranges.weights[blob.name]
            qp = quant_params(lo, hi, "symmetric")
            weight_qparams[blob.name] = qp
            row.append(quantize_tensor(blob, qp))
        qweights.append(row)
    # widen activation ranges to include zero so the affine zero_point stays
    # representable in int8 and the half-step round-trip bound holds
    act_qparams = [quant_params(min(lo, 0.0), max(hi, 0.0), "affine")
                   for lo, hi in ranges.activations]
    return ConvertedVariant(base_graph=graph, precision="INT8", target=target.name,
                            quantized_weights=qweights, weight_qparams=weight_qparams,
                            activation_qparams=act_qparams)


def execution_weights(variant: ConvertedVariant) -> list[list[np.ndarray]]:
    """Float32 weight arrays the interpreter should run with."""
    if variant.precision == "INT8":
        return [
            [dequantize_array(b.to_numpy(), variant.weight_qparams[b.name]) for b in row]
            for row in variant.quantized_weights
        ]
    return [[np.asarray(b.to_numpy(), dtype=np.float32) for b in row]
            for row in variant.quantized_weights]


def infer_variant(variant: ConvertedVariant, batch: TensorBlob) -> TensorBlob:
    """Run a batch through the variant's emulated execution mode."""
    if batch.dtype != "f32":
        raise ValueError(f"batch dtype must be f32, got {batch.dtype}")
    result = infer_variant_array(variant, batch.to_numpy())
    return TensorBlob.from_numpy("output", result)


def infer_variant_array(variant: ConvertedVariant, batch: np.ndarray) -> np.ndarray:
    graph = variant.base_graph
    if variant.precision == "FP32":
        return interpreter.run_batch(graph, batch)

    weights = execution_weights(variant)
    if variant.precision == "FP16":
        transform = lambda i, out: round_fp16_array(out)  # noqa: E731
    else:
        qps = variant.activation_qparams
        transform = lambda i, out: fake_quant_array(out, qps[i])  # noqa: E731
    return interpreter.run_batch(graph, batch, weights=weights, act_transform=transform)


# ---------------------------------------------------------------------------
# serialization

def save_calibration(calib: CalibrationSet, directory: Path | str) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_container(directory / CALIB_JSON, directory / CALIB_BIN, calib.samples,
                    list_key="samples")


def load_calibration(path: Path | str) -> CalibrationSet:
    """Load a calibration set from a directory or its manifest file."""
    path = Path(path)
    json_path = path / CALIB_JSON if path.is_dir() else path
    bin_path = json_path.with_suffix(".bin")
    samples, _ = read_container(json_path, bin_path, list_key="samples")
    if not samples:
        raise ModelPackageError(f"calibration container {json_path} holds no samples")
    return CalibrationSet(samples=samples)


def _qparams_to_json(qp: QuantParams) -> dict:
    return {"mode": qp.mode, "scale": qp.scale, "zero_point": qp.zero_point}


def _qparams_from_json(obj: dict) -> QuantParams:
    try:
        return QuantParams(scale=float(obj["scale"]), zero_point=int(obj["zero_point"]),
                           mode=obj["mode"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelPackageError(f"malformed quantization params {obj!r}") from exc


def save_variant(variant: ConvertedVariant, directory: Path | str) -> None:
    """Write a variant as a model package plus qparams.json for INT8."""
    directory = Path(directory)
    graph = ModelGraph(
        name=variant.base_graph.name,
        input_shape=variant.base_graph.input_shape,
        layers=[
            Layer(kind=layer.kind, params=layer.params, weights=list(row))
            for layer, row in zip(variant.base_graph.layers, variant.quantized_weights)
        ],
        output_dim=variant.base_graph.output_dim,
    )
    save_model(graph, directory,
               extra={"precision": variant.precision, "target": variant.target})
    if variant.precision == "INT8":
        payload = {
            "weights": {name: _qparams_to_json(qp)
                        for name, qp in sorted(variant.weight_qparams.items())},
            "activations": [_qparams_to_json(qp) for qp in variant.activation_qparams],
        }
        tmp = directory / (QPARAMS_JSON + ".tmp")
        tmp.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        tmp.replace(directory / QPARAMS_JSON)


def load_variant(directory: Path | str) -> ConvertedVariant:
    """Load a serialized variant; INT8 packages must carry qparams.json."""
    directory = Path(directory)
    graph, manifest = load_model_manifest(directory)
    precision = manifest.get("precision", "FP32")
    target = manifest.get("target", "")
    if precision not in PRECISIONS:
        raise ModelPackageError(f"unknown precision {precision!r} in {directory}")

    qweights = [list(layer.weights) for layer in graph.layers]
    weight_qparams: dict[str, QuantParams] = {}
    act_qparams: list[QuantParams] = []
    if precision == "INT8":
        qp_path = directory / QPARAMS_JSON
        if not qp_path.exists():
            raise ModelPackageError(f"INT8 package is missing {qp_path}")
        payload = json.loads(qp_path.read_text(encoding="utf-8"))
        weight_qparams = {name: _qparams_from_json(obj)
                          for name, obj in payload.get("weights", {}).items()}
        act_qparams = [_qparams_from_json(obj) for obj in payload.get("activations", [])]
    return ConvertedVariant(base_graph=graph, precision=precision, target=target,
                            quantized_weights=qweights, weight_qparams=weight_qparams,
                            activation_qparams=act_qparams)
