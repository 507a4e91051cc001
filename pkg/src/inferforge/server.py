"""Bundle-serving HTTP runtime.

Three endpoints: POST /api/infer, GET /api/metrics, GET /api/health.
Connections are handled concurrently, but every inference goes through one
bounded FIFO queue consumed by a single worker thread, so requests execute
strictly in arrival order and an overflowing queue answers 503. The model is
loaded once at startup and never mutated afterwards.

Configuration precedence: explicit serve() arguments, then the environment
variables SERVER_HOST / SERVER_PORT / BATCH_SIZE / QUEUE_CAPACITY (the bundle
manifest's extra_env acts as defaults for those), then the manifest config.
"""

from __future__ import annotations

import base64
import binascii
import json
import os
import queue
import threading
import time
import uuid
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np

from inferforge.compose import BundleManifest, read_manifest
from inferforge.errors import BundleError
from inferforge.metrics import LatencyRecord, MetricsStore
from inferforge.quant import ConvertedVariant, execution_weights, infer_variant_array, load_variant

DEFAULT_QUEUE_CAPACITY = 128


class RequestError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status


@dataclass
class _Job:
    request_id: str
    batch: np.ndarray  # [n, *sample_shape], before preprocess
    enqueue_ts: float
    done: threading.Event
    status: int = 500
    payload: dict | None = None


def load_bundle(bundle_dir: Path | str) -> tuple[BundleManifest, ConvertedVariant]:
    """Read and cross-check a server bundle from disk."""
    bundle_dir = Path(bundle_dir)
    manifest = read_manifest(bundle_dir)
    variant = load_variant(bundle_dir / manifest.model_ref)
    if variant.precision != manifest.precision:
        raise BundleError(
            f"manifest precision {manifest.precision} does not match model package "
            f"precision {variant.precision}")
    if manifest.precision == "INT8":
        qparams_path = bundle_dir / (manifest.qparams_ref or "")
        if manifest.qparams_ref is None or not qparams_path.exists():
            raise BundleError("INT8 bundle must reference an existing qparams.json")
    manifest.config.processing.validate_for_model(variant.base_graph.input_shape,
                                                  variant.base_graph.output_dim)
    return manifest, variant


class InferenceServer:
    """One served bundle: HTTP front end + single inference worker."""

    def __init__(self, bundle_dir: Path | str, host: str | None = None,
                 port: int | None = None, queue_capacity: int | None = None):
        self.manifest, self.variant = load_bundle(bundle_dir)
        config = self.manifest.config

        env = dict(config.extra_env)
        env.update(os.environ)
        self.host = host if host is not None else env.get("SERVER_HOST", config.host)
        self.port = int(port if port is not None else env.get("SERVER_PORT", config.port))
        self.batch_size = int(env.get("BATCH_SIZE", config.batch_size))
        if queue_capacity is None:
            queue_capacity = int(env.get("QUEUE_CAPACITY", DEFAULT_QUEUE_CAPACITY))
        if queue_capacity < 0:
            raise BundleError(f"queue capacity must be >= 0, got {queue_capacity}")
        self.queue_capacity = queue_capacity

        self.processing = config.processing
        self.graph = self.variant.base_graph
        self.input_shape = self.graph.input_shape
        # resolved once: serving reuses these arrays for every request
        self._weights = execution_weights(self.variant)

        self.store = MetricsStore()
        self._queue: queue.Queue = queue.Queue()
        self._admission = threading.Lock()
        self._pending = 0
        self._stopping = False
        self._httpd: ThreadingHTTPServer | None = None
        self._worker: threading.Thread | None = None
        self._serve_thread: threading.Thread | None = None

    # -- lifecycle ----------------------------------------------------------

    def start(self) -> None:
        handler = _make_handler(self)
        self._httpd = ThreadingHTTPServer((self.host, self.port), handler)
        self._httpd.daemon_threads = True
        self.port = self._httpd.server_address[1]
        self._worker = threading.Thread(target=self._worker_loop, name="infer-worker",
                                        daemon=True)
        self._worker.start()
        self._serve_thread = threading.Thread(target=self._httpd.serve_forever,
                                              name="http-serve", daemon=True)
        self._serve_thread.start()

    def stop(self) -> None:
        """Graceful: the in-flight request finishes, queued ones are rejected."""
        if self._stopping:
            return
        self._stopping = True
        self._queue.put(None)  # wake the worker even when idle
        if self._worker is not None:
            self._worker.join(timeout=30)
        if self._httpd is not None:
            self._httpd.shutdown()
            self._httpd.server_close()
        if self._serve_thread is not None:
            self._serve_thread.join(timeout=10)

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}"

    # -- request handling (called from connection threads) -------------------

    def handle_infer(self, body: bytes) -> tuple[int, dict]:
        try:
            request_id, batch = self._decode_request(body)
        except RequestError as exc:
            return exc.status, {"error": str(exc)}

        with self._admission:
            if self._stopping:
                return 503, {"error": "server is shutting down"}
            if self._pending >= self.queue_capacity + 1:  # 1 in flight + capacity queued
                return 503, {"error": f"queue full (capacity {self.queue_capacity})"}
            self._pending += 1
            job = _Job(request_id=request_id, batch=batch,
                       enqueue_ts=time.perf_counter(), done=threading.Event())
            self._queue.put(job)
        job.done.wait()
        return job.status, job.payload or {"error": "internal error"}

    def handle_metrics(self) -> tuple[int, dict]:
        return 200, self.store.summary().to_json()

    def handle_health(self) -> tuple[int, dict]:
        return 200, {"status": "ok", "target": self.manifest.target,
                     "precision": self.manifest.precision}

    # -- decoding ------------------------------------------------------------

    def _decode_request(self, body: bytes) -> tuple[str, np.ndarray]:
        try:
            obj = json.loads(body)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise RequestError(400, f"malformed JSON body: {exc}") from exc
        if not isinstance(obj, dict) or not isinstance(obj.get("tensor"), dict):
            raise RequestError(400, "request must be an object with a 'tensor' field")
        request_id = obj.get("request_id") or uuid.uuid4().hex[:12]
        tensor = obj["tensor"]

        dtype = tensor.get("dtype")
        if dtype != "f32":
            raise RequestError(400, f"tensor dtype must be 'f32', got {dtype!r}")
        shape = tensor.get("shape")
        if (not isinstance(shape, list) or not shape
                or any(not isinstance(d, int) or d < 1 for d in shape)):
            raise RequestError(400, f"tensor shape must be positive integers, got {shape!r}")
        data_b64 = tensor.get("data_b64")
        if not isinstance(data_b64, str):
            raise RequestError(400, "tensor needs base64 string field 'data_b64'")
        try:
            raw = base64.b64decode(data_b64, validate=True)
        except (binascii.Error, ValueError) as exc:
            raise RequestError(400, f"invalid base64 payload: {exc}") from exc
        expected_bytes = int(np.prod(shape)) * 4
        if len(raw) != expected_bytes:
            raise RequestError(
                400, f"payload holds {len(raw)} bytes but shape {shape} needs {expected_bytes}")

        arr = np.frombuffer(raw, dtype="<f4").reshape(shape)
        batch = self._split_batch(arr)
        if batch.shape[0] > self.batch_size:
            raise RequestError(
                422, f"batch of {batch.shape[0]} exceeds configured batch_size "
                     f"{self.batch_size}")
        return request_id, batch

    def _split_batch(self, arr: np.ndarray) -> np.ndarray:
        """Interpret an optional leading batch dimension; returns [n, *sample]."""
        expected = self.input_shape
        target = self.processing.reshape_target()
        shape = tuple(arr.shape)
        if target is None:
            if shape == expected:
                return arr[np.newaxis]
            if shape[1:] == expected:
                return arr
            raise RequestError(
                422, f"shape mismatch: expected {list(expected)} or "
                     f"[n, *{list(expected)}], got {list(shape)}")
        # a reshape step accepts any sample layout of the right size
        want = int(np.prod(target))
        if target != expected:
            raise RequestError(
                422, f"shape mismatch: preprocess reshape target {list(target)} does not "
                     f"match model input {list(expected)}")
        if len(shape) >= 2 and int(np.prod(shape[1:])) == want:
            return arr
        if int(np.prod(shape)) == want:
            return arr.reshape(1, -1)
        raise RequestError(
            422, f"shape mismatch: expected sample size {want}, got shape {list(shape)}")

    # -- worker --------------------------------------------------------------

    def _worker_loop(self) -> None:
        while True:
            job = self._queue.get()
            if job is None or self._stopping:
                if job is not None:
                    self._reject(job)
                self._drain()
                return
            self._process(job)

    def _drain(self) -> None:
        while True:
            try:
                job = self._queue.get_nowait()
            except queue.Empty:
                return
            if job is not None:
                self._reject(job)

    def _reject(self, job: _Job) -> None:
        job.status = 503
        job.payload = {"error": "server is shutting down"}
        with self._admission:
            self._pending -= 1
        job.done.set()

    def _process(self, job: _Job) -> None:
        start_ts = time.perf_counter()
        try:
            samples = [self.processing.apply_preprocess(job.batch[i])
                       for i in range(job.batch.shape[0])]
            batch = np.ascontiguousarray(np.stack(samples), dtype=np.float32)
            if tuple(batch.shape[1:]) != self.input_shape:
                raise RequestError(
                    422, f"shape mismatch after preprocess: expected "
                         f"{list(self.input_shape)}, got {list(batch.shape[1:])}")
            outputs = infer_variant_array(self.variant, batch)
            fields = self.processing.apply_postprocess(outputs)
            payload = {"request_id": job.request_id}
            if "outputs" in fields:
                out = np.ascontiguousarray(fields["outputs"], dtype="<f4")
                payload["outputs"] = {
                    "dtype": "f32",
                    "shape": list(out.shape),
                    "data_b64": base64.b64encode(out.tobytes()).decode("ascii"),
                }
            else:
                payload["class_ids"] = fields["class_ids"]
                if "scores" in fields:
                    payload["scores"] = fields["scores"]
            end_ts = time.perf_counter()
            payload["latency_ms"] = (end_ts - job.enqueue_ts) * 1000.0
            self.store.append(LatencyRecord(request_id=job.request_id,
                                            enqueue_ts=job.enqueue_ts,
                                            start_ts=start_ts, end_ts=end_ts))
            job.status, job.payload = 200, payload
        except RequestError as exc:
            job.status, job.payload = exc.status, {"error": str(exc)}
        except Exception as exc:  # defensive: a failed request must not kill the worker
            job.status, job.payload = 500, {"error": f"inference failed: {exc}"}
        finally:
            with self._admission:
                self._pending -= 1
            job.done.set()


def _make_handler(server: InferenceServer):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):  # quiet; diagnostics go to the CLI
            pass

        def _send(self, status: int, payload: dict) -> None:
            body = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):
            if self.path == "/api/metrics":
                self._send(*server.handle_metrics())
            elif self.path == "/api/health":
                self._send(*server.handle_health())
            else:
                self._send(404, {"error": f"unknown path {self.path}"})

        def do_POST(self):
            if self.path != "/api/infer":
                self._send(404, {"error": f"unknown path {self.path}"})
                return
            try:
                length = int(self.headers.get("Content-Length", "0"))
            except ValueError:
                length = 0
            body = self.rfile.read(length) if length > 0 else b""
            self._send(*server.handle_infer(body))

    return Handler


def serve(bundle_dir: Path | str, host: str | None = None, port: int | None = None,
          queue_capacity: int | None = None) -> InferenceServer:
    """Load a bundle and start serving it; returns the running server handle."""
    srv = InferenceServer(bundle_dir, host=host, port=port, queue_capacity=queue_capacity)
    srv.start()
    return srv
