"""Command-line entry point.

Subcommands: build, serve, bench, report, targets. Exit codes: 0 success,
1 validation error, 2 runtime/build failure, 3 connectivity failure. Human
output goes to stdout, diagnostics to stderr, machine-readable artifacts only
to files.
"""

from __future__ import annotations

import argparse
import json
import signal
import sys
import threading
from pathlib import Path

from inferforge import __version__, bench as bench_mod, compose, server as server_mod
from inferforge.errors import (
    BenchError,
    InferForgeError,
    ServerUnreachableError,
)
from inferforge.model_io import load_model
from inferforge.quant import load_calibration
from inferforge.targets import default_registry

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_CONNECTIVITY = 3


class _CliValidationError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse defaults to exit code 2 for bad flags; the CLI contract wants 1
    def error(self, message):
        raise _CliValidationError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="inferforge",
                     description="Build, serve, and benchmark inference bundles.")
    parser.add_argument("--version", action="version", version=f"inferforge {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("build", parents=[], help="convert a model for several targets")
    p.add_argument("--model", required=True, help="model package directory")
    p.add_argument("--config", help="YAML build config file")
    p.add_argument("--targets", nargs="+", help="target names (default: all registered)")
    p.add_argument("--calib", help="calibration set (directory or calib.json)")
    p.add_argument("--out", required=True, help="output directory for bundles")

    p = sub.add_parser("serve", help="serve one built bundle until interrupted")
    p.add_argument("--bundle", required=True, help="bundle directory")
    p.add_argument("--host")
    p.add_argument("--port", type=int)

    p = sub.add_parser("bench", help="benchmark a running server")
    p.add_argument("--server", required=True, help="server base URL")
    p.add_argument("--dataset", required=True, help="input tensor container")
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--warmup", type=int, default=10)
    p.add_argument("--timeout-ms", type=int, default=30000)
    p.add_argument("--variant-id", help="label for the benched variant")
    p.add_argument("--out", required=True, help="report output path")
    p.add_argument("--format", choices=("json", "csv"), default="json")

    p = sub.add_parser("report", help="merge bench reports into a comparison")
    p.add_argument("--inputs", nargs="+", required=True, help="bench JSON reports")
    p.add_argument("--baseline", required=True, help="baseline variant id for speedups")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", required=True, help="merged report output path")

    sub.add_parser("targets", help="print the target profile table")
    return parser


def cmd_targets(_args) -> int:
    profiles = default_registry().list_targets()
    rows = [(p.name, p.platform_label, p.framework_label, p.precision_label)
            for p in profiles]
    widths = [max(len(r[i]) for r in rows + [("NAME", "PLATFORM", "FRAMEWORK", "PRECISION")])
              for i in range(4)]
    header = ("NAME", "PLATFORM", "FRAMEWORK", "PRECISION")
    print("  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip())
    for r in rows:
        print("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
    return EXIT_OK


def cmd_build(args) -> int:
    registry = default_registry()
    try:
        graph = load_model(args.model)
        if args.config:
            build_cfg = compose.load_build_config(args.config)
        else:
            build_cfg = compose.BuildConfig(server=compose.ServerConfig())
        targets = args.targets or build_cfg.targets or [p.name for p in registry.list_targets()]
        calib_path = args.calib or build_cfg.calib_path
        calib = load_calibration(calib_path) if calib_path else None
        # validate everything up front so nothing is written on bad input
        for name in targets:
            registry.get(name)
    except InferForgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    try:
        report, manifests = compose.build_all(graph, targets, build_cfg.server, calib,
                                              args.out, registry=registry)
    except InferForgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    name_w = max(len(e.target) for e in report.entries)
    print(f"built {len(manifests)}/{len(report.entries)} bundles for model "
          f"{graph.name!r} in {report.wall_clock_ms:.0f} ms")
    print(f"{'TARGET'.ljust(name_w)}  {'CONVERT_MS':>10}  {'COMPOSE_MS':>10}  "
          f"{'TOTAL_MS':>10}  STATUS")
    for e in report.entries:
        status = e.status if e.status == "ok" else f"failed: {e.reason}"
        print(f"{e.target.ljust(name_w)}  {e.convert_ms:>10.1f}  {e.compose_ms:>10.1f}  "
              f"{e.total_ms:>10.1f}  {status}")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "build_report.json").write_text(
        json.dumps(report.to_json(), indent=2) + "\n", encoding="utf-8")

    if report.failed:
        for e in report.failed:
            print(f"target {e.target} failed: {e.reason}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_serve(args) -> int:
    try:
        srv = server_mod.serve(args.bundle, host=args.host, port=args.port)
    except (InferForgeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    print(f"listening on {srv.host}:{srv.port} "
          f"(target {srv.manifest.target}, precision {srv.manifest.precision})",
          flush=True)
    stop_requested = threading.Event()

    def _on_signal(signum, frame):
        stop_requested.set()

    signal.signal(signal.SIGINT, _on_signal)
    signal.signal(signal.SIGTERM, _on_signal)
    stop_requested.wait()
    print("shutting down: finishing the in-flight request", file=sys.stderr)
    srv.stop()
    return EXIT_OK


def cmd_bench(args) -> int:
    try:
        config = bench_mod.BenchConfig(server_url=args.server, dataset_ref=args.dataset,
                                       request_count=args.count, warmup_count=args.warmup,
                                       timeout_ms=args.timeout_ms,
                                       variant_id=args.variant_id)
    except BenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    try:
        result = bench_mod.run_bench(config)
    except ServerUnreachableError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONNECTIVITY
    except InferForgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    verdict = bench_mod.cross_check(result)
    bench_mod.emit_report([result], args.format, args.out)

    s = result.summary
    if s.count:
        print(f"{result.variant_id}: count={s.count} mean={s.mean_ms:.2f}ms "
              f"median={s.median_ms:.2f}ms p90={s.p90_ms:.2f}ms errors={result.errors}")
    else:
        print(f"{result.variant_id}: no successful requests ({result.errors} errors)")
    print(f"report written to {args.out}")

    if not verdict.ok:
        for m in verdict.mismatches:
            print(f"cross-check mismatch: {m}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_report(args) -> int:
    results = []
    seen = set()
    try:
        for path in args.inputs:
            parsed, _ = bench_mod.parse_report(path)
            for r in parsed:
                if r.variant_id in seen:
                    raise BenchError(f"duplicate variant {r.variant_id!r} across inputs")
                seen.add(r.variant_id)
                results.append(r)
        bench_mod.emit_report(results, args.format, args.out, baseline=args.baseline)
    except (InferForgeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print(f"merged {len(results)} variants (baseline {args.baseline}) into {args.out}")
    return EXIT_OK


_COMMANDS = {
    "targets": cmd_targets,
    "build": cmd_build,
    "serve": cmd_serve,
    "bench": cmd_bench,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _CliValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return _COMMANDS[args.subcommand](args)


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
