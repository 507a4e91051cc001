import numpy as np
import pytest

from inferforge.engine import interpreter
from inferforge.errors import CalibrationRequiredError, QuantizationError
from inferforge.graph import Layer, ModelGraph
from inferforge.quant import (
    CalibrationSet,
    calibrate,
    convert,
    infer_variant,
    load_calibration,
    load_variant,
    save_calibration,
    save_variant,
)
from inferforge.targets import default_registry
from inferforge.tensor import TensorBlob
from inferforge.zoo import identity_dense, lenet_like, random_calibration

from helpers import blob, calibration_from_batch, random_batch

REG = default_registry()


def _relu_graph(dim=2):
    return ModelGraph(name="relu", input_shape=(dim,),
                      layers=[Layer(kind="ReLU")], output_dim=dim)


def test_calibrate_relu_clips_negatives():
    g = _relu_graph()
    calib = CalibrationSet(samples=[blob("s0", np.array([-1.0, 2.0], np.float32))])
    ranges = calibrate(g, calib)
    assert ranges.activations == [(0.0, 2.0)]


def test_calibrate_weight_ranges_are_exact():
    g = identity_dense(dim=3)
    g.layers[0].weights[0] = blob("id.weight", np.array(
        [[-3.0, 0.0, 5.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], np.float32))
    calib = CalibrationSet(samples=[blob("s0", np.zeros(3, np.float32))])
    ranges = calibrate(g, calib)
    assert ranges.weights["id.weight"] == (-3.0, 5.0)


def test_calibrate_unions_sample_ranges():
    g = identity_dense(dim=2)
    calib = CalibrationSet(samples=[
        blob("s0", np.array([0.0, 1.0], np.float32)),
        blob("s1", np.array([-2.0, 3.0], np.float32)),
    ])
    ranges = calibrate(g, calib)
    # union-of-ranges oracle over the sample set
    lo = min(-2.0, 0.0)
    hi = max(1.0, 3.0)
    assert ranges.activations[0] == (lo, hi)


def test_calibrate_is_order_invariant():
    g = lenet_like(seed=11)
    batch = random_batch(np.random.default_rng(11), g, n=6, low=0.0, high=1.0)
    forward = calibration_from_batch(batch)
    backward = CalibrationSet(samples=list(reversed(forward.samples)))
    assert calibrate(g, forward).activations == calibrate(g, backward).activations


def test_calibrate_rejects_shape_mismatch():
    g = identity_dense(dim=3)
    calib = CalibrationSet(samples=[blob("s0", np.zeros(4, np.float32))])
    with pytest.raises(QuantizationError, match="shape"):
        calibrate(g, calib)


def test_calibration_set_invariants():
    with pytest.raises(QuantizationError, match="at least one"):
        CalibrationSet(samples=[])
    with pytest.raises(QuantizationError, match="disagree"):
        CalibrationSet(samples=[blob("a", np.zeros(2, np.float32)),
                                blob("b", np.zeros(3, np.float32))])


def test_calibration_round_trips_through_disk(tmp_path):
    g = lenet_like(seed=2)
    calib = random_calibration(g, count=3, seed=2)
    save_calibration(calib, tmp_path / "calib")
    loaded = load_calibration(tmp_path / "calib")
    assert loaded.samples == calib.samples
    assert (tmp_path / "calib" / "calib.json").exists()
    assert (tmp_path / "calib" / "calib.bin").exists()


def test_fp32_conversion_keeps_weights_bit_identical():
    g = lenet_like(seed=3)
    variant = convert(g, REG.get("CPU"))
    for layer, row in zip(g.layers, variant.quantized_weights):
        for original, converted in zip(layer.weights, row):
            assert converted.data == original.data
    assert variant.precision == "FP32"


def test_int8_target_requires_calibration():
    g = lenet_like(seed=4)
    with pytest.raises(CalibrationRequiredError, match="calibration dataset required"):
        convert(g, REG.get("ARM"))


def test_symmetric_weight_qparams_have_zero_zero_point():
    g = lenet_like(seed=5, weight_low=-1.0, weight_high=1.0)
    variant = convert(g, REG.get("ALVEO"), random_calibration(g, 4, seed=5))
    assert variant.weight_qparams
    for qp in variant.weight_qparams.values():
        assert qp.mode == "symmetric"
        assert qp.zero_point == 0
    for qp in variant.activation_qparams:
        assert qp.mode == "affine"


def test_gpu_precision_is_configurable():
    g = lenet_like(seed=6)
    gpu = REG.get("GPU")
    assert convert(g, gpu).precision == "FP16"
    assert convert(g, gpu, precision="FP32").precision == "FP32"
    calib = random_calibration(g, 4, seed=6)
    assert convert(g, gpu, calib, precision="INT8").precision == "INT8"
    from inferforge.errors import TargetError
    with pytest.raises(TargetError, match="supports"):
        convert(g, REG.get("CPU"), precision="INT8")


def test_fp32_variant_inference_is_bitwise_reference():
    g = lenet_like(seed=7)
    variant = convert(g, REG.get("CPU"))
    batch = TensorBlob.from_numpy(
        "x", random_batch(np.random.default_rng(7), g, n=3, low=0.0, high=1.0))
    np.testing.assert_array_equal(infer_variant(variant, batch).to_numpy(),
                                  interpreter.infer_fp32(g, batch).to_numpy())


def test_int8_identity_dense_round_trip_bound():
    g = identity_dense(dim=4)
    rng = np.random.default_rng(8)
    calib_batch = rng.uniform(-1.0, 2.0, (16, 4)).astype(np.float32)
    variant = convert(g, REG.get("ARM"), calibration_from_batch(calib_batch))
    act_scale = variant.activation_qparams[0].scale
    # evaluation points stay inside the calibrated range
    xs = rng.uniform(calib_batch.min(), calib_batch.max(), (64, 4)).astype(np.float32)
    out = infer_variant(variant, TensorBlob.from_numpy("x", xs)).to_numpy()
    assert np.max(np.abs(out - xs)) <= act_scale / 2


def test_fp16_variant_outputs_are_binary16_representable():
    g = lenet_like(seed=9)
    variant = convert(g, REG.get("GPU"), precision="FP16")
    batch = TensorBlob.from_numpy(
        "x", random_batch(np.random.default_rng(9), g, n=2, low=0.0, high=1.0))
    out = infer_variant(variant, batch).to_numpy()
    np.testing.assert_array_equal(out, out.astype(np.float16).astype(np.float32))
    for row in variant.quantized_weights:
        for b in row:
            w = b.to_numpy()
            np.testing.assert_array_equal(w, w.astype(np.float16).astype(np.float32))


def test_int8_argmax_agreement_on_lenet():
    g = lenet_like(seed=10, weight_low=-0.5, weight_high=0.5)
    rng = np.random.default_rng(10)
    inputs = random_batch(rng, g, n=100, low=0.0, high=1.0)
    variant = convert(g, REG.get("AGX"), calibration_from_batch(inputs))
    batch = TensorBlob.from_numpy("x", inputs)
    ref = interpreter.infer_fp32(g, batch).to_numpy().argmax(axis=1)
    got = infer_variant(variant, batch).to_numpy().argmax(axis=1)
    agreement = int((ref == got).sum())
    assert agreement >= 90


def test_variant_round_trips_through_disk(tmp_path):
    g = lenet_like(seed=12)
    calib = random_calibration(g, 4, seed=12)
    for target, kwargs in (("CPU", {}), ("GPU", {}), ("ARM", {"calib": calib})):
        variant = convert(g, REG.get(target), kwargs.get("calib"))
        save_variant(variant, tmp_path / target)
        loaded = load_variant(tmp_path / target)
        assert loaded.precision == variant.precision
        assert loaded.target == target
        assert loaded.weight_qparams == variant.weight_qparams
        assert loaded.activation_qparams == variant.activation_qparams
        for a, b in zip(loaded.quantized_weights, variant.quantized_weights):
            assert a == b
        batch = TensorBlob.from_numpy(
            "x", random_batch(np.random.default_rng(12), g, n=2, low=0.0, high=1.0))
        np.testing.assert_array_equal(infer_variant(loaded, batch).to_numpy(),
                                      infer_variant(variant, batch).to_numpy())


def test_int8_variant_missing_qparams_fails_to_load(tmp_path):
    g = lenet_like(seed=13)
    variant = convert(g, REG.get("ARM"), random_calibration(g, 4, seed=13))
    save_variant(variant, tmp_path / "v")
    (tmp_path / "v" / "qparams.json").unlink()
    from inferforge.errors import ModelPackageError
    with pytest.raises(ModelPackageError, match="qparams"):
        load_variant(tmp_path / "v")
