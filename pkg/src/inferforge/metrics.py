"""Latency records and their aggregate statistics.

The percentile estimator is nearest-rank (the ceil(p/100 * n)-th smallest
observation, no interpolation); the median is the midpoint of the two middle
order statistics for even counts. Both definitions are shared by the server's
metrics endpoint and the benchmark client so the two sides are comparable.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass


def percentile(values, p: float) -> float:
    """Nearest-rank percentile of a non-empty collection, p in (0, 100]."""
    if not 0 < p <= 100:
        raise ValueError(f"percentile p must be in (0, 100], got {p}")
    s = sorted(values)
    if not s:
        raise ValueError("percentile of empty collection")
    rank = math.ceil(p * len(s) / 100)
    return float(s[rank - 1])


def median(values) -> float:
    """Middle order statistic; mean of the two middle ones for even counts."""
    s = sorted(values)
    if not s:
        raise ValueError("median of empty collection")
    n = len(s)
    mid = n // 2
    if n % 2 == 1:
        return float(s[mid])
    return (float(s[mid - 1]) + float(s[mid])) / 2.0


@dataclass(frozen=True)
class LatencyRecord:
    """Per-request monotonic timestamps (seconds); latency spans enqueue to
    response-encode, so queuing delay is included."""

    request_id: str
    enqueue_ts: float
    start_ts: float
    end_ts: float

    def __post_init__(self):
        if not self.enqueue_ts <= self.start_ts <= self.end_ts:
            raise ValueError(
                f"timestamps must be ordered enqueue <= start <= end, got "
                f"({self.enqueue_ts}, {self.start_ts}, {self.end_ts})")

    @property
    def latency_ms(self) -> float:
        return (self.end_ts - self.enqueue_ts) * 1000.0


@dataclass
class MetricsSummary:
    count: int
    mean_ms: float | None
    median_ms: float | None
    p90_ms: float | None
    min_ms: float | None
    max_ms: float | None
    throughput_rps: float | None
    window: str = "lifetime"

    def to_json(self) -> dict:
        return {
            "count": self.count,
            "mean_ms": self.mean_ms,
            "median_ms": self.median_ms,
            "p90_ms": self.p90_ms,
            "min_ms": self.min_ms,
            "max_ms": self.max_ms,
            "throughput_rps": self.throughput_rps,
            "window": self.window,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "MetricsSummary":
        return cls(count=int(obj["count"]), mean_ms=obj["mean_ms"],
                   median_ms=obj["median_ms"], p90_ms=obj["p90_ms"],
                   min_ms=obj["min_ms"], max_ms=obj["max_ms"],
                   throughput_rps=obj["throughput_rps"],
                   window=obj.get("window", "lifetime"))


def summarize_latencies(latencies_ms, span_seconds: float | None = None) -> MetricsSummary:
    """Aggregate a list of latency values; empty input yields the all-null summary."""
    latencies_ms = list(latencies_ms)
    if not latencies_ms:
        return MetricsSummary(count=0, mean_ms=None, median_ms=None, p90_ms=None,
                              min_ms=None, max_ms=None, throughput_rps=None)
    throughput = None
    if span_seconds is not None and span_seconds > 0:
        throughput = len(latencies_ms) / span_seconds
    return MetricsSummary(
        count=len(latencies_ms),
        mean_ms=sum(latencies_ms) / len(latencies_ms),
        median_ms=median(latencies_ms),
        p90_ms=percentile(latencies_ms, 90),
        min_ms=float(min(latencies_ms)),
        max_ms=float(max(latencies_ms)),
        throughput_rps=throughput,
    )


class MetricsStore:
    """Append-only record store: one writer (the worker), many readers.

    Reads snapshot under the same lock as appends, so any reader observes a
    prefix-complete set of records and never mutates state.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._records: list[LatencyRecord] = []

    def append(self, record: LatencyRecord) -> None:
        with self._lock:
            self._records.append(record)

    def snapshot(self) -> list[LatencyRecord]:
        with self._lock:
            return list(self._records)

    @property
    def count(self) -> int:
        with self._lock:
            return len(self._records)

    def summary(self) -> MetricsSummary:
        records = self.snapshot()
        if not records:
            return summarize_latencies([])
        span = max(r.end_ts for r in records) - min(r.enqueue_ts for r in records)
        return summarize_latencies([r.latency_ms for r in records], span_seconds=span)
