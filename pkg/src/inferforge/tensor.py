"""Neutral tensor container: named, typed, shaped blobs of little-endian bytes.

This is the on-disk and in-memory unit every other module works with. A
"tensor container" on disk is a JSON manifest listing name/dtype/shape/offset/
length per tensor plus a single binary file holding the concatenated raw data.
The same convention backs model weight files, calibration sets, and benchmark
datasets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from inferforge.errors import ModelPackageError

DTYPE_WIDTHS = {"f32": 4, "f16": 2, "i8": 1}

_NUMPY_DTYPES = {
    "f32": np.dtype("<f4"),
    "f16": np.dtype("<f2"),
    "i8": np.dtype("int8"),
}


@dataclass(frozen=True)
class TensorBlob:
    """A named tensor stored as raw little-endian bytes.

    Invariants are enforced at construction: rank >= 1, every dimension >= 1,
    and the byte length must equal the shape product times the element width.
    """

    name: str
    dtype: str
    shape: tuple[int, ...]
    data: bytes

    def __post_init__(self):
        if self.dtype not in DTYPE_WIDTHS:
            raise ValueError(f"unknown dtype {self.dtype!r}")
        if len(self.shape) < 1:
            raise ValueError("shape must have rank >= 1")
        if any(not isinstance(d, int) or d < 1 for d in self.shape):
            raise ValueError(f"shape dimensions must be positive integers, got {self.shape}")
        expected = self.element_count * DTYPE_WIDTHS[self.dtype]
        if len(self.data) != expected:
            raise ValueError(
                f"blob length mismatch for {self.name!r}: "
                f"expected {expected} bytes, got {len(self.data)}"
            )

    @property
    def element_count(self) -> int:
        n = 1
        for d in self.shape:
            n *= d
        return n

    def to_numpy(self) -> np.ndarray:
        """View the raw bytes as a numpy array (native float for f16)."""
        arr = np.frombuffer(self.data, dtype=_NUMPY_DTYPES[self.dtype]).reshape(self.shape)
        return arr

    @classmethod
    def from_numpy(cls, name: str, arr: np.ndarray, dtype: str | None = None) -> "TensorBlob":
        if dtype is None:
            dtype = {"float32": "f32", "float16": "f16", "int8": "i8"}.get(arr.dtype.name)
            if dtype is None:
                raise ValueError(f"unsupported numpy dtype {arr.dtype}")
        arr = np.ascontiguousarray(arr, dtype=_NUMPY_DTYPES[dtype])
        if arr.ndim == 0:
            raise ValueError("shape must have rank >= 1")
        return cls(name=name, dtype=dtype, shape=tuple(int(d) for d in arr.shape), data=arr.tobytes())


def write_container(path_json: Path | str, path_bin: Path | str, tensors: list[TensorBlob],
                    extra: dict | None = None, list_key: str = "tensors") -> None:
    """Write a tensor container (manifest + concatenated blob file).

    ``extra`` adds top-level manifest keys next to the tensor list. Writes are
    atomic: both files are staged under temporary names and renamed into place.
    """
    path_json = Path(path_json)
    path_bin = Path(path_bin)
    entries = []
    offset = 0
    chunks = []
    for t in tensors:
        entries.append({
            "name": t.name,
            "dtype": t.dtype,
            "shape": list(t.shape),
            "offset": offset,
            "length": len(t.data),
        })
        chunks.append(t.data)
        offset += len(t.data)
    manifest = dict(extra or {})
    manifest[list_key] = entries
    tmp_bin = path_bin.with_name(path_bin.name + ".tmp")
    tmp_json = path_json.with_name(path_json.name + ".tmp")
    tmp_bin.write_bytes(b"".join(chunks))
    tmp_json.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    tmp_bin.replace(path_bin)
    tmp_json.replace(path_json)


def read_container(path_json: Path | str, path_bin: Path | str,
                   list_key: str = "tensors") -> tuple[list[TensorBlob], dict]:
    """Read a tensor container back; returns (tensors, manifest dict)."""
    path_json = Path(path_json)
    path_bin = Path(path_bin)
    if not path_json.exists():
        raise ModelPackageError(f"missing manifest file {path_json}")
    if not path_bin.exists():
        raise ModelPackageError(f"missing blob file {path_bin}")
    try:
        manifest = json.loads(path_json.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelPackageError(f"manifest {path_json} is not valid JSON: {exc}") from exc
    blob = path_bin.read_bytes()
    tensors = []
    for entry in manifest.get(list_key, []):
        tensors.append(read_container_entry(entry, blob))
    return tensors, manifest


def read_container_entry(entry: dict, blob: bytes) -> TensorBlob:
    """Materialize one manifest entry from the shared blob bytes."""
    try:
        name = entry["name"]
        dtype = entry["dtype"]
        shape = tuple(int(d) for d in entry["shape"])
        offset = int(entry["offset"])
        length = int(entry["length"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelPackageError(f"malformed tensor entry {entry!r}") from exc
    if offset < 0 or offset + length > len(blob):
        raise ModelPackageError(
            f"blob length mismatch for {name!r}: "
            f"entry spans [{offset}, {offset + length}) but blob has {len(blob)} bytes"
        )
    try:
        return TensorBlob(name=name, dtype=dtype, shape=shape, data=blob[offset:offset + length])
    except ValueError as exc:
        raise ModelPackageError(str(exc)) from exc
