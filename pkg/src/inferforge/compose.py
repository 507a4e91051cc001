"""Bundle composition and the multi-target build pipeline.

A server bundle is a directory holding everything the runtime needs:
``manifest.json`` (resolved config + environment template), ``model/`` (the
converted variant package, plus ``qparams.json`` for INT8). ``build_all``
drives convert + compose for many targets concurrently and reports per-target
timings; one target failing does not disturb the others.
"""

from __future__ import annotations

import json
import shutil
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import yaml

from inferforge import __version__
from inferforge.errors import BundleError, CalibrationRequiredError, InferForgeError
from inferforge.graph import ModelGraph
from inferforge.processing import ProcessingSpec
from inferforge.quant import (
    CalibrationSet,
    ConvertedVariant,
    convert,
    load_calibration,
    save_variant,
)
from inferforge.targets import TargetRegistry, default_registry

MANIFEST_JSON = "manifest.json"
MODEL_DIR = "model"
CLIENT_JSON = "client.json"


@dataclass
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    batch_size: int = 1
    precision_override: str | None = None
    parallelism: int = 4
    extra_env: dict[str, str] = field(default_factory=dict)
    processing: ProcessingSpec = field(default_factory=ProcessingSpec)

    def __post_init__(self):
        if not 1 <= int(self.port) <= 65535:
            raise BundleError(f"port must be in 1..65535, got {self.port}")
        if self.batch_size < 1:
            raise BundleError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.parallelism < 1:
            raise BundleError(f"parallelism must be >= 1, got {self.parallelism}")
        for k, v in self.extra_env.items():
            if not isinstance(k, str) or not isinstance(v, str):
                raise BundleError(f"extra_env entries must be strings, got {k!r}: {v!r}")

    def to_manifest_json(self) -> dict:
        return {
            "host": self.host,
            "port": self.port,
            "batch_size": self.batch_size,
            "parallelism": self.parallelism,
            "extra_env": dict(self.extra_env),
            "processing": self.processing.to_json(),
        }

    @classmethod
    def from_manifest_json(cls, obj: dict) -> "ServerConfig":
        try:
            return cls(
                host=obj["host"],
                port=int(obj["port"]),
                batch_size=int(obj["batch_size"]),
                parallelism=int(obj["parallelism"]),
                extra_env=dict(obj.get("extra_env", {})),
                processing=ProcessingSpec.from_obj(obj.get("processing")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise BundleError(f"malformed config block in manifest: {exc!r}") from exc


@dataclass
class BundleManifest:
    bundle_name: str
    target: str
    precision: str
    model_ref: str
    qparams_ref: str | None
    config: ServerConfig
    created_at: str
    tool_version: str

    def to_json(self) -> dict:
        return {
            "bundle_name": self.bundle_name,
            "target": self.target,
            "precision": self.precision,
            "model_ref": self.model_ref,
            "qparams_ref": self.qparams_ref,
            "config": self.config.to_manifest_json(),
            "created_at": self.created_at,
            "tool_version": self.tool_version,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "BundleManifest":
        try:
            manifest = cls(
                bundle_name=obj["bundle_name"],
                target=obj["target"],
                precision=obj["precision"],
                model_ref=obj["model_ref"],
                qparams_ref=obj["qparams_ref"],
                config=ServerConfig.from_manifest_json(obj["config"]),
                created_at=obj["created_at"],
                tool_version=obj["tool_version"],
            )
        except KeyError as exc:
            raise BundleError(f"bundle manifest is missing key {exc}") from exc
        for ref in (manifest.model_ref, manifest.qparams_ref):
            if ref is None:
                continue
            p = Path(ref)
            if p.is_absolute() or ".." in p.parts:
                raise BundleError(f"manifest reference {ref!r} escapes the bundle directory")
        return manifest


def read_manifest(bundle_dir: Path | str) -> BundleManifest:
    path = Path(bundle_dir) / MANIFEST_JSON
    if not path.exists():
        raise BundleError(f"missing {path}")
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise BundleError(f"{path} is not valid JSON: {exc}") from exc
    return BundleManifest.from_json(obj)


def _now_rfc3339() -> str:
    return datetime.now(timezone.utc).isoformat()


def compose_server_bundle(variant: ConvertedVariant, config: ServerConfig,
                          out_dir: Path | str,
                          registry: TargetRegistry | None = None) -> BundleManifest:
    """Assemble a deployment-ready bundle directory for one converted variant."""
    registry = registry or default_registry()
    profile = registry.get(variant.target)
    if variant.precision not in profile.precisions:
        raise BundleError(
            f"precision {variant.precision} not allowed for target {profile.name} "
            f"({profile.precision_label})")
    if config.precision_override is not None:
        if len(profile.precisions) == 1:
            raise BundleError(
                f"precision_override is only legal for configurable-precision targets; "
                f"{profile.name} is fixed at {profile.default_precision}")
        if config.precision_override != variant.precision:
            raise BundleError(
                f"precision_override {config.precision_override} conflicts with variant "
                f"precision {variant.precision}")
    config.processing.validate_for_model(variant.base_graph.input_shape,
                                         variant.base_graph.output_dim)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_variant(variant, out_dir / MODEL_DIR)

    qparams_ref = f"{MODEL_DIR}/qparams.json" if variant.precision == "INT8" else None
    manifest = BundleManifest(
        bundle_name=f"{variant.base_graph.name}-{variant.target}-{variant.precision}",
        target=variant.target,
        precision=variant.precision,
        model_ref=MODEL_DIR,
        qparams_ref=qparams_ref,
        config=config,
        created_at=_now_rfc3339(),
        tool_version=__version__,
    )
    tmp = out_dir / (MANIFEST_JSON + ".tmp")
    tmp.write_text(json.dumps(manifest.to_json(), indent=2) + "\n", encoding="utf-8")
    tmp.replace(out_dir / MANIFEST_JSON)
    return manifest


@dataclass
class ClientConfig:
    host: str
    port: int
    dataset_ref: str
    request_count: int = 1000
    input_shape: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.request_count < 1:
            raise BundleError(f"request_count must be >= 1, got {self.request_count}")
        if not 1 <= int(self.port) <= 65535:
            raise BundleError(f"port must be in 1..65535, got {self.port}")


def compose_client_bundle(config: ClientConfig, out_dir: Path | str) -> dict:
    """Write the matching benchmark-client bundle for a served model.

    The dataset is referenced by (absolute) path, not copied. Sample shapes
    are validated early so a generated client never pairs with a server it
    cannot feed.
    """
    dataset_path = Path(config.dataset_ref).resolve()
    samples = load_calibration(dataset_path).samples
    first = samples[0].shape
    if config.input_shape is not None:
        if int(np.prod(first)) != int(np.prod(config.input_shape)):
            raise BundleError(
                f"dataset sample shape {list(first)} (size {int(np.prod(first))}) cannot "
                f"feed model input {list(config.input_shape)}")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "server_url": f"http://{config.host}:{config.port}",
        "dataset_ref": str(dataset_path),
        "request_count": config.request_count,
        "input_shape": list(config.input_shape) if config.input_shape else None,
        "created_at": _now_rfc3339(),
        "tool_version": __version__,
    }
    tmp = out_dir / (CLIENT_JSON + ".tmp")
    tmp.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    tmp.replace(out_dir / CLIENT_JSON)
    return manifest


@dataclass
class BuildEntry:
    target: str
    convert_ms: float
    compose_ms: float
    total_ms: float
    status: str  # "ok" | "failed"
    reason: str | None = None

    def to_json(self) -> dict:
        return {"target": self.target, "convert_ms": self.convert_ms,
                "compose_ms": self.compose_ms, "total_ms": self.total_ms,
                "status": self.status, "reason": self.reason}


@dataclass
class BuildReport:
    entries: list[BuildEntry]
    wall_clock_ms: float

    @property
    def failed(self) -> list[BuildEntry]:
        return [e for e in self.entries if e.status != "ok"]

    def to_json(self) -> dict:
        return {"wall_clock_ms": self.wall_clock_ms,
                "entries": [e.to_json() for e in self.entries]}


def build_all(graph: ModelGraph, targets: list[str], config: ServerConfig,
              calib: CalibrationSet | None, out_root: Path | str,
              registry: TargetRegistry | None = None,
              convert_fn=convert,
              max_workers: int | None = None) -> tuple[BuildReport, list[BundleManifest]]:
    """Convert + compose every requested target, concurrently.

    Unknown targets and a missing calibration set for INT8 targets are
    rejected before any bundle is written. Per-target entries report the
    convert/compose spans; ``total_ms`` is measured from the start of the
    build phase so queue wait under limited parallelism is visible.
    ``max_workers`` overrides the config's parallelism bound without changing
    the composed bundles (the same inputs build the same bytes serially or
    concurrently).
    """
    registry = registry or default_registry()
    resolved = []
    for name in targets:
        profile = registry.get(name)
        override = config.precision_override if len(profile.precisions) > 1 else None
        resolved.append((profile, profile.resolve_precision(override)))
    if calib is None and any(p == "INT8" for _, p in resolved):
        int8_targets = [t.name for t, p in resolved if p == "INT8"]
        raise CalibrationRequiredError(
            f"calibration dataset required for INT8 targets {int8_targets}")

    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)

    build_start = time.perf_counter()

    def run_one(profile, precision) -> tuple[BuildEntry, BundleManifest | None]:
        bundle_dir = out_root / f"{graph.name}-{profile.name}-{precision}"
        # the precision override is meaningful only for configurable targets
        if len(profile.precisions) > 1:
            target_config = config
        else:
            target_config = replace(config, precision_override=None)
        try:
            t0 = time.perf_counter()
            variant = convert_fn(graph, profile, calib, precision=precision)
            t1 = time.perf_counter()
            manifest = compose_server_bundle(variant, target_config, bundle_dir,
                                             registry=registry)
            t2 = time.perf_counter()
            entry = BuildEntry(target=profile.name,
                               convert_ms=(t1 - t0) * 1000.0,
                               compose_ms=(t2 - t1) * 1000.0,
                               total_ms=(t2 - build_start) * 1000.0,
                               status="ok")
            return entry, manifest
        except Exception as exc:  # continue-on-error: isolate this target
            shutil.rmtree(bundle_dir, ignore_errors=True)
            end = time.perf_counter()
            entry = BuildEntry(target=profile.name, convert_ms=0.0, compose_ms=0.0,
                               total_ms=(end - build_start) * 1000.0,
                               status="failed", reason=str(exc))
            return entry, None

    workers = min(max_workers or config.parallelism, len(resolved)) or 1
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(run_one, profile, precision) for profile, precision in resolved]
        results = [f.result() for f in futures]
    wall_ms = (time.perf_counter() - build_start) * 1000.0

    entries = sorted((entry for entry, _ in results), key=lambda e: e.target)
    manifests = sorted((m for _, m in results if m is not None), key=lambda m: m.target)
    return BuildReport(entries=entries, wall_clock_ms=wall_ms), manifests


# ---------------------------------------------------------------------------
# build configuration file

_CONFIG_KEYS = {"targets", "host", "port", "batch_size", "gpu_precision", "parallelism",
                "calib", "processing", "extra_env"}


@dataclass
class BuildConfig:
    server: ServerConfig
    targets: list[str] | None = None
    calib_path: str | None = None


def load_build_config(path: Path | str) -> BuildConfig:
    """Parse the YAML build config (flat keys plus one nesting level)."""
    path = Path(path)
    if not path.exists():
        raise InferForgeError(f"config file {path} does not exist")
    try:
        obj = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise InferForgeError(f"config file {path} is not valid YAML: {exc}") from exc
    if obj is None:
        obj = {}
    if not isinstance(obj, dict):
        raise InferForgeError(f"config file {path} must hold a mapping at the top level")
    unknown = set(obj) - _CONFIG_KEYS
    if unknown:
        raise InferForgeError(f"unknown config keys {sorted(unknown)}")

    targets = obj.get("targets")
    if targets is not None and (not isinstance(targets, list)
                                or any(not isinstance(t, str) for t in targets)):
        raise InferForgeError("config 'targets' must be a list of target names")

    try:
        server = ServerConfig(
            host=str(obj.get("host", "127.0.0.1")),
            port=int(obj.get("port", 8080)),
            batch_size=int(obj.get("batch_size", 1)),
            precision_override=obj.get("gpu_precision"),
            parallelism=int(obj.get("parallelism", 4)),
            extra_env={str(k): str(v) for k, v in (obj.get("extra_env") or {}).items()},
            processing=ProcessingSpec.from_obj(obj.get("processing")),
        )
    except (TypeError, ValueError) as exc:
        raise InferForgeError(f"invalid config value: {exc}") from exc
    calib = obj.get("calib")
    return BuildConfig(server=server, targets=targets,
                       calib_path=str(calib) if calib else None)
