"""Shared builders for the test suite."""

from __future__ import annotations

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from inferforge.graph import Layer, ModelGraph
from inferforge.quant import CalibrationSet
from inferforge.tensor import TensorBlob


def blob(name, arr, dtype=None):
    return TensorBlob.from_numpy(name, np.asarray(arr), dtype=dtype)


def dense_layer(rng, name, in_dim, out_dim, low=-1.0, high=1.0):
    return Layer(kind="Dense", params={"in_dim": in_dim, "out_dim": out_dim}, weights=[
        blob(f"{name}.weight", rng.uniform(low, high, (out_dim, in_dim)).astype(np.float32)),
        blob(f"{name}.bias", rng.uniform(low, high, (out_dim,)).astype(np.float32)),
    ])


def conv_layer(rng, name, kh, kw, cin, cout, stride=1, low=-1.0, high=1.0):
    return Layer(
        kind="Conv2D",
        params={"kernel_h": kh, "kernel_w": kw, "in_channels": cin,
                "out_channels": cout, "stride": stride},
        weights=[
            blob(f"{name}.kernel",
                 rng.uniform(low, high, (cout, cin, kh, kw)).astype(np.float32)),
            blob(f"{name}.bias", rng.uniform(low, high, (cout,)).astype(np.float32)),
        ])


def small_dense_graph(seed=0, in_dim=4, out_dim=3, name="tiny"):
    rng = np.random.default_rng(seed)
    layers = [dense_layer(rng, "fc", in_dim, out_dim), Layer(kind="Softmax")]
    return ModelGraph(name=name, input_shape=(in_dim,), layers=layers, output_dim=out_dim)


def random_graph(rng: np.random.Generator) -> ModelGraph:
    """Random valid graph with every dimension <= 8."""
    layers = []
    if rng.random() < 0.7:
        h = int(rng.integers(3, 9))
        w = int(rng.integers(3, 9))
        c = int(rng.integers(1, 4))
        input_shape = (h, w, c)
        shape = [h, w, c]
        for _ in range(int(rng.integers(1, 3))):
            if rng.random() < 0.6 and shape[0] >= 2 and shape[1] >= 2:
                kh = int(rng.integers(1, min(shape[0], 3) + 1))
                kw = int(rng.integers(1, min(shape[1], 3) + 1))
                stride = int(rng.integers(1, 3))
                cout = int(rng.integers(1, 5))
                layers.append(conv_layer(rng, f"conv{len(layers)}", kh, kw, shape[2], cout,
                                         stride))
                shape = [(shape[0] - kh) // stride + 1, (shape[1] - kw) // stride + 1, cout]
                if rng.random() < 0.5:
                    layers.append(Layer(kind="ReLU"))
            elif shape[0] >= 2 and shape[1] >= 2:
                ph = int(rng.integers(1, min(shape[0], 3) + 1))
                pw = int(rng.integers(1, min(shape[1], 3) + 1))
                stride = int(rng.integers(1, 3))
                layers.append(Layer(kind="MaxPool2D",
                                    params={"pool_h": ph, "pool_w": pw, "stride": stride}))
                shape = [(shape[0] - ph) // stride + 1, (shape[1] - pw) // stride + 1, shape[2]]
        layers.append(Layer(kind="Flatten"))
        flat = shape[0] * shape[1] * shape[2]
    else:
        flat = int(rng.integers(1, 9))
        input_shape = (flat,)

    dim = flat
    for _ in range(int(rng.integers(1, 3))):
        out = int(rng.integers(1, 9))
        layers.append(dense_layer(rng, f"fc{len(layers)}", dim, out))
        dim = out
        if rng.random() < 0.4:
            layers.append(Layer(kind="ReLU"))
    if rng.random() < 0.5:
        layers.append(Layer(kind="Softmax"))
    return ModelGraph(name="fuzz", input_shape=input_shape, layers=layers, output_dim=dim)


def random_batch(rng, graph, n=1, low=-1.0, high=1.0):
    return rng.uniform(low, high, (n, *graph.input_shape)).astype(np.float32)


def calibration_from_batch(batch) -> CalibrationSet:
    return CalibrationSet(samples=[
        blob(f"sample{i}", batch[i]) for i in range(batch.shape[0])
    ])


class StubServer:
    """Scripted inference endpoint: fixed per-request delays, fake metrics."""

    def __init__(self, delays, metrics=None):
        self.delays = list(delays)
        self.metrics = metrics or {}
        self.hits = 0
        self._lock = threading.Lock()
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *a):
                pass

            def _send(self, obj, status=200):
                body = json.dumps(obj).encode()
                self.send_response(status)
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def do_GET(self):
                if self.path == "/api/health":
                    self._send({"status": "ok", "target": "STUB", "precision": "FP32"})
                else:
                    self._send(stub.metrics)

            def do_POST(self):
                self.rfile.read(int(self.headers.get("Content-Length", 0)))
                with stub._lock:
                    i = stub.hits
                    stub.hits += 1
                time.sleep(stub.delays[i % len(stub.delays)])
                self._send({"request_id": f"r{i}", "latency_ms": 1.0, "class_ids": [0]})

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.httpd.server_address[1]}"
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self.thread.start()

    def stop(self):
        self.httpd.shutdown()
        self.httpd.server_close()
