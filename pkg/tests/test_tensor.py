import numpy as np
import pytest

from inferforge.errors import ModelPackageError
from inferforge.tensor import TensorBlob, read_container, write_container


def test_blob_round_trips_numpy():
    arr = np.arange(6, dtype=np.float32).reshape(2, 3)
    t = TensorBlob.from_numpy("a", arr)
    assert t.dtype == "f32"
    assert t.shape == (2, 3)
    np.testing.assert_array_equal(t.to_numpy(), arr)


def test_blob_length_must_match_shape():
    with pytest.raises(ValueError, match="blob length mismatch"):
        TensorBlob(name="a", dtype="f32", shape=(2,), data=b"\x00" * 7)


def test_blob_rejects_bad_shapes():
    with pytest.raises(ValueError):
        TensorBlob(name="a", dtype="f32", shape=(), data=b"")
    with pytest.raises(ValueError):
        TensorBlob(name="a", dtype="i8", shape=(0,), data=b"")
    with pytest.raises(ValueError):
        TensorBlob(name="a", dtype="u64", shape=(1,), data=b"\x00" * 8)


def test_dtype_widths():
    assert TensorBlob.from_numpy("h", np.zeros(3, np.float16)).dtype == "f16"
    assert len(TensorBlob.from_numpy("h", np.zeros(3, np.float16)).data) == 6
    assert len(TensorBlob.from_numpy("q", np.zeros(3, np.int8)).data) == 3


def test_data_is_little_endian():
    t = TensorBlob.from_numpy("x", np.array([1.0], dtype=np.float32))
    assert t.data == b"\x00\x00\x80\x3f"


def test_container_round_trip(tmp_path):
    tensors = [
        TensorBlob.from_numpy("a", np.arange(4, dtype=np.float32)),
        TensorBlob.from_numpy("b", np.arange(6, dtype=np.int8).reshape(2, 3)),
    ]
    write_container(tmp_path / "t.json", tmp_path / "t.bin", tensors, extra={"kind": "test"})
    loaded, manifest = read_container(tmp_path / "t.json", tmp_path / "t.bin")
    assert manifest["kind"] == "test"
    assert loaded == tensors


def test_container_truncated_blob(tmp_path):
    tensors = [TensorBlob.from_numpy("a", np.arange(4, dtype=np.float32))]
    write_container(tmp_path / "t.json", tmp_path / "t.bin", tensors)
    raw = (tmp_path / "t.bin").read_bytes()
    (tmp_path / "t.bin").write_bytes(raw[:-1])  # one byte short
    with pytest.raises(ModelPackageError, match="blob length mismatch"):
        read_container(tmp_path / "t.json", tmp_path / "t.bin")


def test_container_missing_files(tmp_path):
    with pytest.raises(ModelPackageError, match="missing"):
        read_container(tmp_path / "nope.json", tmp_path / "nope.bin")
