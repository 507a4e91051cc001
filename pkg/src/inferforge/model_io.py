"""Model package I/O.

A model package is a directory with ``model.json`` (structure + weight table)
and ``weights.bin`` (concatenated little-endian tensors). ``save_model`` /
``load_model`` round-trip a ModelGraph bit-exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

from inferforge.errors import GraphValidationError, ModelPackageError
from inferforge.graph import Layer, ModelGraph, validate_graph
from inferforge.tensor import read_container_entry

MODEL_JSON = "model.json"
WEIGHTS_BIN = "weights.bin"


def save_model(graph: ModelGraph, path: Path | str, extra: dict | None = None) -> None:
    """Write ``graph`` as a model package directory at ``path``.

    Validates the graph first. Overwriting an existing package replaces both
    files via atomic renames. ``extra`` adds top-level manifest keys (used for
    converted variants: precision, target).
    """
    validate_graph(graph)
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)

    layers = []
    chunks = []
    offset = 0
    for layer in graph.layers:
        weights = []
        for blob in layer.weights:
            weights.append({
                "name": blob.name,
                "dtype": blob.dtype,
                "shape": list(blob.shape),
                "offset": offset,
                "length": len(blob.data),
            })
            chunks.append(blob.data)
            offset += len(blob.data)
        layers.append({"kind": layer.kind, "params": layer.params, "weights": weights})

    manifest = {
        "name": graph.name,
        "input_shape": list(graph.input_shape),
        "output_dim": graph.output_dim,
    }
    manifest.update(extra or {})
    manifest["layers"] = layers

    tmp_bin = path / (WEIGHTS_BIN + ".tmp")
    tmp_json = path / (MODEL_JSON + ".tmp")
    tmp_bin.write_bytes(b"".join(chunks))
    tmp_json.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    tmp_bin.replace(path / WEIGHTS_BIN)
    tmp_json.replace(path / MODEL_JSON)


def load_model_manifest(path: Path | str) -> tuple[ModelGraph, dict]:
    """Load a model package; returns the validated graph and the raw manifest."""
    path = Path(path)
    json_path = path / MODEL_JSON
    bin_path = path / WEIGHTS_BIN
    if not json_path.exists():
        raise ModelPackageError(f"missing {json_path}")
    if not bin_path.exists():
        raise ModelPackageError(f"missing {bin_path}")
    try:
        manifest = json.loads(json_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelPackageError(f"{json_path} is not valid JSON: {exc}") from exc
    blob = bin_path.read_bytes()

    try:
        name = manifest["name"]
        input_shape = tuple(int(d) for d in manifest["input_shape"])
        output_dim = int(manifest["output_dim"])
        layer_entries = manifest["layers"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelPackageError(f"malformed model manifest: {exc!r}") from exc

    layers = []
    for i, entry in enumerate(layer_entries):
        try:
            weights = [read_container_entry(w, blob) for w in entry.get("weights", [])]
            layers.append(Layer(kind=entry["kind"], params=dict(entry.get("params", {})),
                                weights=weights))
        except (ModelPackageError, GraphValidationError) as exc:
            raise type(exc)(f"layer {i}: {exc}") from exc
        except (KeyError, TypeError) as exc:
            raise ModelPackageError(f"layer {i}: malformed entry ({exc!r})") from exc

    graph = ModelGraph(name=name, input_shape=input_shape, layers=layers,
                       output_dim=output_dim)
    validate_graph(graph)
    return graph, manifest


def load_model(path: Path | str) -> ModelGraph:
    """Load and validate a model package directory."""
    graph, _ = load_model_manifest(path)
    return graph
