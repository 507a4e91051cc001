"""Closed-loop benchmark client and report emission.

One outstanding request at a time, warmup requests excluded from statistics,
dataset samples cycled round-robin. After the run the server's own metrics
endpoint is fetched so the two latency views can be cross-checked.
"""

from __future__ import annotations

import base64
import csv
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from time import perf_counter

import requests

from inferforge.errors import BenchError, ServerUnreachableError
from inferforge.metrics import MetricsSummary, median, summarize_latencies
from inferforge.quant import load_calibration


@dataclass
class BenchConfig:
    server_url: str
    dataset_ref: str
    request_count: int = 1000
    warmup_count: int = 10
    timeout_ms: int = 30000
    variant_id: str | None = None  # defaults to "<model?>-<target>-<precision>" from health

    def __post_init__(self):
        if self.request_count < 1:
            raise BenchError(f"request_count must be >= 1, got {self.request_count}")
        if self.warmup_count < 0:
            raise BenchError(f"warmup_count must be >= 0, got {self.warmup_count}")
        if self.timeout_ms < 1:
            raise BenchError(f"timeout_ms must be >= 1, got {self.timeout_ms}")

    @classmethod
    def from_client_bundle(cls, path: Path | str, **overrides) -> "BenchConfig":
        """Build a config from a composed client bundle (client.json)."""
        path = Path(path)
        if path.is_dir():
            path = path / "client.json"
        obj = json.loads(path.read_text(encoding="utf-8"))
        kwargs = {
            "server_url": obj["server_url"],
            "dataset_ref": obj["dataset_ref"],
            "request_count": int(obj.get("request_count", 1000)),
        }
        kwargs.update(overrides)
        return cls(**kwargs)


@dataclass
class CrossCheckVerdict:
    ok: bool
    mismatches: list[str] = field(default_factory=list)


@dataclass
class BenchResult:
    variant_id: str
    client_latencies_ms: list[float]
    summary: MetricsSummary
    server_summary: MetricsSummary | None
    errors: int
    request_count: int
    warmup_count: int


def _sample_payloads(dataset_ref: str) -> list[bytes]:
    samples = load_calibration(dataset_ref).samples
    payloads = []
    for i, s in enumerate(samples):
        body = {
            "request_id": f"bench-{i}",
            "tensor": {
                "dtype": "f32",
                "shape": list(s.shape),
                "data_b64": base64.b64encode(s.data).decode("ascii"),
            },
        }
        payloads.append(json.dumps(body).encode("utf-8"))
    return payloads


def run_bench(config: BenchConfig) -> BenchResult:
    """Send warmup + measured requests sequentially and aggregate latencies."""
    timeout = config.timeout_ms / 1000.0
    session = requests.Session()
    base = config.server_url.rstrip("/")

    try:
        health = session.get(f"{base}/api/health", timeout=timeout)
        health.raise_for_status()
        info = health.json()
    except (requests.RequestException, ValueError) as exc:
        raise ServerUnreachableError(
            f"health check against {base} failed: {exc}") from exc
    variant_id = config.variant_id or f"{info.get('target')}-{info.get('precision')}"

    payloads = _sample_payloads(config.dataset_ref)
    headers = {"Content-Type": "application/json"}
    infer_url = f"{base}/api/infer"

    def post(i: int):
        return session.post(infer_url, data=payloads[i % len(payloads)],
                            headers=headers, timeout=timeout)

    for i in range(config.warmup_count):
        try:
            post(i)
        except requests.RequestException:
            pass  # warmup is best-effort; measured phase will surface real faults

    latencies: list[float] = []
    errors = 0
    run_start = perf_counter()
    for i in range(config.request_count):
        t0 = perf_counter()
        try:
            resp = post(i)
            t1 = perf_counter()
            if resp.status_code == 200:
                latencies.append((t1 - t0) * 1000.0)
            else:
                errors += 1
        except requests.RequestException:
            errors += 1
    span = perf_counter() - run_start

    try:
        server_summary = MetricsSummary.from_json(
            session.get(f"{base}/api/metrics", timeout=timeout).json())
    except (requests.RequestException, ValueError, KeyError):
        server_summary = None

    return BenchResult(
        variant_id=variant_id,
        client_latencies_ms=latencies,
        summary=summarize_latencies(latencies, span_seconds=span),
        server_summary=server_summary,
        errors=errors,
        request_count=config.request_count,
        warmup_count=config.warmup_count,
    )


def cross_check(result: BenchResult) -> CrossCheckVerdict:
    """Reconcile client-side and server-side views of the same run.

    The server has no network round-trip in its latencies, so its median must
    not exceed the client's; its lifetime count must equal warmup plus the
    successfully measured requests.
    """
    mismatches = []
    expected_count = result.request_count + result.warmup_count - result.errors
    if result.server_summary is None:
        mismatches.append("server metrics endpoint could not be read")
    else:
        if result.server_summary.count != expected_count:
            mismatches.append(
                f"server served {result.server_summary.count} requests, expected "
                f"{expected_count} (= {result.request_count} + {result.warmup_count} "
                f"warmup - {result.errors} errors)")
        if (result.server_summary.median_ms is not None
                and result.summary.median_ms is not None
                and result.server_summary.median_ms > result.summary.median_ms):
            mismatches.append(
                f"server median {result.server_summary.median_ms:.3f} ms exceeds client "
                f"median {result.summary.median_ms:.3f} ms")
    if len(result.client_latencies_ms) + result.errors != result.request_count:
        mismatches.append(
            f"bookkeeping: {len(result.client_latencies_ms)} latencies + "
            f"{result.errors} errors != {result.request_count} requests")
    return CrossCheckVerdict(ok=not mismatches, mismatches=mismatches)


def boxplot_stats(values) -> dict:
    """Tukey box: quartiles by midpoint-of-halves, whiskers at 1.5x IQR."""
    s = sorted(float(v) for v in values)
    if not s:
        raise BenchError("boxplot of empty collection")
    n = len(s)
    q2 = median(s)
    if n == 1:
        q1 = q3 = q2
    else:
        half = n // 2
        q1 = median(s[:half])
        q3 = median(s[half:] if n % 2 == 0 else s[half + 1:])
    iqr = q3 - q1
    lo_fence = q1 - 1.5 * iqr
    hi_fence = q3 + 1.5 * iqr
    inside = [v for v in s if lo_fence <= v <= hi_fence]
    whisker_lo = min(inside)
    whisker_hi = max(inside)
    return {
        "q1": q1, "q2": q2, "q3": q3,
        "whisker_lo": whisker_lo, "whisker_hi": whisker_hi,
        "outliers": [v for v in s if v < whisker_lo or v > whisker_hi],
    }


def _speedup(baseline: BenchResult, variant: BenchResult) -> float | None:
    if baseline.summary.mean_ms is None or variant.summary.mean_ms in (None, 0.0):
        return None
    return baseline.summary.mean_ms / variant.summary.mean_ms


CSV_COLUMNS = ["variant_id", "count", "mean_ms", "median_ms", "p90_ms", "min_ms",
               "max_ms", "throughput_rps", "speedup_vs_baseline"]


def emit_report(results: list[BenchResult], format: str, out_path: Path | str,
                baseline: str | None = None) -> None:
    """Write the comparison report; ``baseline`` defaults to the first variant."""
    if not results:
        raise BenchError("cannot emit a report for zero results")
    if format not in ("json", "csv"):
        raise BenchError(f"unknown report format {format!r}")
    baseline = baseline or results[0].variant_id
    by_id = {r.variant_id: r for r in results}
    if baseline not in by_id:
        raise BenchError(
            f"unknown baseline {baseline!r} (variants: {sorted(by_id)})")
    base = by_id[baseline]
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)

    if format == "csv":
        with out_path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for r in results:
                s = r.summary
                writer.writerow([r.variant_id, s.count, s.mean_ms, s.median_ms,
                                 s.p90_ms, s.min_ms, s.max_ms, s.throughput_rps,
                                 _speedup(base, r)])
        return

    variants = []
    for r in results:
        entry = {
            "variant_id": r.variant_id,
            "latencies_ms": list(r.client_latencies_ms),
            "summary": r.summary.to_json(),
            "boxplot": boxplot_stats(r.client_latencies_ms) if r.client_latencies_ms else None,
            "server_summary": r.server_summary.to_json() if r.server_summary else None,
            "errors": r.errors,
            "request_count": r.request_count,
            "warmup_count": r.warmup_count,
        }
        variants.append(entry)
    report = {
        "generated_at": datetime.now(timezone.utc).isoformat(),
        "baseline": baseline,
        "variants": variants,
    }
    out_path.write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")


def parse_report(path: Path | str) -> tuple[list[BenchResult], str]:
    """Read a JSON report back into BenchResults; returns (results, baseline)."""
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    results = []
    try:
        for v in obj["variants"]:
            server = v.get("server_summary")
            results.append(BenchResult(
                variant_id=v["variant_id"],
                client_latencies_ms=[float(x) for x in v["latencies_ms"]],
                summary=MetricsSummary.from_json(v["summary"]),
                server_summary=MetricsSummary.from_json(server) if server else None,
                errors=int(v.get("errors", 0)),
                request_count=int(v.get("request_count", len(v["latencies_ms"]))),
                warmup_count=int(v.get("warmup_count", 0)),
            ))
        return results, obj["baseline"]
    except (KeyError, TypeError, ValueError) as exc:
        raise BenchError(f"malformed bench report {path}: {exc!r}") from exc
