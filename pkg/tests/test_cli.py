import csv
import json
import signal
import subprocess
import sys

import pytest

from inferforge import cli, targets
from inferforge.metrics import summarize_latencies
from inferforge.model_io import save_model
from inferforge.quant import save_calibration
from inferforge.server import serve
from inferforge.targets import TargetProfile, TargetRegistry
from inferforge.zoo import identity_dense, lenet_like, random_calibration

from conftest import make_bundle
from helpers import StubServer


@pytest.fixture
def fresh_registry(monkeypatch):
    reg = TargetRegistry()
    monkeypatch.setattr(targets, "_default_registry", reg)
    return reg


@pytest.fixture
def model_dir(tmp_path):
    g = lenet_like(seed=40)
    save_model(g, tmp_path / "model")
    return str(tmp_path / "model")


@pytest.fixture
def calib_dir(tmp_path):
    calib = random_calibration(lenet_like(seed=40), count=3, seed=40)
    save_calibration(calib, tmp_path / "calib")
    return str(tmp_path / "calib")


def test_targets_table(capsys, fresh_registry):
    assert cli.main(["targets"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 6  # header + five built-ins
    rows = {line.split()[0]: line for line in lines[1:]}
    assert "Edge GPU" in rows["AGX"] and "INT8" in rows["AGX"]
    assert "ARM" in rows["ARM"] and "INT8" in rows["ARM"]
    assert "x86 CPU" in rows["CPU"] and "FP32" in rows["CPU"]
    assert "Cloud FPGA" in rows["ALVEO"] and "INT8" in rows["ALVEO"]
    assert "FP32/FP16/INT8" in rows["GPU"]


def test_targets_table_with_extension(capsys, fresh_registry):
    fresh_registry.register_target(TargetProfile(
        name="TPU", platform_label="Edge TPU", framework_label="custom",
        precisions=("FP16",), default_precision="FP16"))
    assert cli.main(["targets"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 7
    assert lines[-1].startswith("TPU")  # sorted after the built-ins


def test_unknown_flag_is_validation_error(capsys):
    assert cli.main(["targets", "--bogus"]) == 1
    assert cli.main(["--bogus"]) == 1
    assert "error" in capsys.readouterr().err


def test_unknown_subcommand_is_validation_error():
    assert cli.main(["frobnicate"]) == 1


def test_build_cpu_only_without_calib(tmp_path, model_dir, capsys):
    out = tmp_path / "out"
    assert cli.main(["build", "--model", model_dir, "--targets", "CPU",
                     "--out", str(out)]) == 0
    assert (out / "lenet-CPU-FP32" / "manifest.json").exists()
    assert (out / "build_report.json").exists()
    printed = capsys.readouterr().out
    assert "CPU" in printed and "CONVERT_MS" in printed


def test_build_int8_without_calib_rejected_before_building(tmp_path, model_dir, capsys):
    out = tmp_path / "out"
    assert cli.main(["build", "--model", model_dir, "--targets", "ARM",
                     "--out", str(out)]) == 1
    assert "calibration dataset required" in capsys.readouterr().err
    assert not (out / "lenet-ARM-INT8").exists()


def test_build_all_targets(tmp_path, model_dir, calib_dir):
    out = tmp_path / "out"
    assert cli.main(["build", "--model", model_dir, "--calib", calib_dir,
                     "--out", str(out)]) == 0
    bundles = sorted(p.name for p in out.iterdir() if p.is_dir())
    assert bundles == ["lenet-AGX-INT8", "lenet-ALVEO-INT8", "lenet-ARM-INT8",
                       "lenet-CPU-FP32", "lenet-GPU-FP16"]
    report = json.loads((out / "build_report.json").read_text())
    assert {e["target"] for e in report["entries"]} == {"AGX", "ALVEO", "ARM", "CPU", "GPU"}
    assert all(e["status"] == "ok" for e in report["entries"])
    assert report["wall_clock_ms"] > 0


def test_build_with_config_file(tmp_path, model_dir, calib_dir):
    cfg = tmp_path / "build.yaml"
    cfg.write_text(f"targets: [CPU, GPU]\ngpu_precision: FP32\ncalib: {calib_dir}\n"
                   "port: 9005\n")
    out = tmp_path / "out"
    assert cli.main(["build", "--model", model_dir, "--config", str(cfg),
                     "--out", str(out)]) == 0
    names = sorted(p.name for p in out.iterdir() if p.is_dir())
    assert names == ["lenet-CPU-FP32", "lenet-GPU-FP32"]
    manifest = json.loads((out / "lenet-GPU-FP32" / "manifest.json").read_text())
    assert manifest["config"]["port"] == 9005


def test_build_targets_flag_order_does_not_matter(tmp_path, model_dir, calib_dir):
    for i, order in enumerate((["CPU", "ARM"], ["ARM", "CPU"])):
        out = tmp_path / f"out{i}"
        assert cli.main(["build", "--model", model_dir, "--calib", calib_dir,
                         "--targets", *order, "--out", str(out)]) == 0
    a = sorted(p.name for p in (tmp_path / "out0").iterdir() if p.is_dir())
    b = sorted(p.name for p in (tmp_path / "out1").iterdir() if p.is_dir())
    assert a == b


def test_build_unknown_target(tmp_path, model_dir, capsys):
    assert cli.main(["build", "--model", model_dir, "--targets", "NPU",
                     "--out", str(tmp_path / "out")]) == 1
    assert "unknown target" in capsys.readouterr().err


def test_build_missing_model(tmp_path, capsys):
    assert cli.main(["build", "--model", str(tmp_path / "nope"),
                     "--out", str(tmp_path / "out")]) == 1


def test_build_single_target_failure_exits_2(tmp_path, model_dir, calib_dir, capsys):
    out = tmp_path / "out"
    out.mkdir()
    # occupy one bundle path with a plain file: that target alone must fail
    (out / "lenet-GPU-FP16").write_text("roadblock")
    assert cli.main(["build", "--model", model_dir, "--calib", calib_dir,
                     "--out", str(out)]) == 2
    report = json.loads((out / "build_report.json").read_text())
    failed = [e for e in report["entries"] if e["status"] == "failed"]
    assert [e["target"] for e in failed] == ["GPU"]
    assert (out / "lenet-CPU-FP32" / "manifest.json").exists()
    assert "GPU" in capsys.readouterr().err


def test_serve_subprocess_lifecycle(tmp_path):
    bundle = make_bundle(tmp_path / "b", identity_dense(dim=3))
    proc = subprocess.Popen(
        [sys.executable, "-m", "inferforge.cli", "serve", "--bundle", str(bundle),
         "--port", "0"],
        stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True)
    try:
        line = proc.stdout.readline()
        assert line.startswith("listening on ")
        host_port = line.split()[2]
        import requests
        health = requests.get(f"http://{host_port}/api/health", timeout=5).json()
        assert health["status"] == "ok"
        proc.send_signal(signal.SIGINT)
        assert proc.wait(timeout=15) == 0
    finally:
        if proc.poll() is None:
            proc.kill()


def test_serve_corrupt_manifest_exits_2(tmp_path, capsys):
    bundle = make_bundle(tmp_path / "b", identity_dense(dim=3))
    (bundle / "manifest.json").write_text("{broken")
    assert cli.main(["serve", "--bundle", str(bundle)]) == 2
    assert "error" in capsys.readouterr().err


def test_bench_against_live_server(tmp_path, capsys):
    bundle = make_bundle(tmp_path / "b", identity_dense(dim=3))
    srv = serve(bundle, port=0)
    dataset = tmp_path / "data"
    save_calibration(random_calibration(identity_dense(dim=3), count=4, seed=1), dataset)
    out = tmp_path / "bench.json"
    try:
        code = cli.main(["bench", "--server", srv.url, "--dataset", str(dataset),
                         "--count", "30", "--warmup", "2", "--out", str(out)])
    finally:
        srv.stop()
    assert code == 0
    report = json.loads(out.read_text())
    assert report["variants"][0]["summary"]["count"] == 30
    printed = capsys.readouterr().out
    assert "count=30" in printed


def test_bench_unreachable_exits_3(tmp_path, capsys):
    dataset = tmp_path / "data"
    save_calibration(random_calibration(identity_dense(dim=3), count=2, seed=2), dataset)
    assert cli.main(["bench", "--server", "http://127.0.0.1:1", "--dataset", str(dataset),
                     "--count", "2", "--timeout-ms", "300",
                     "--out", str(tmp_path / "r.json")]) == 3


def test_bench_cross_check_failure_exits_2(tmp_path, capsys):
    dataset = tmp_path / "data"
    save_calibration(random_calibration(identity_dense(dim=3), count=2, seed=3), dataset)
    stub = StubServer(delays=[0.0], metrics={"count": 999, "mean_ms": 1.0,
                                             "median_ms": 1.0, "p90_ms": 1.0,
                                             "min_ms": 1.0, "max_ms": 1.0,
                                             "throughput_rps": 1.0,
                                             "window": "lifetime"})
    try:
        code = cli.main(["bench", "--server", stub.url, "--dataset", str(dataset),
                         "--count", "5", "--warmup", "0",
                         "--out", str(tmp_path / "r.json")])
    finally:
        stub.stop()
    assert code == 2
    assert "cross-check mismatch" in capsys.readouterr().err
    assert (tmp_path / "r.json").exists()  # the report is still written


def _write_bench_json(path, variant_id, latencies):
    from inferforge.bench import BenchResult, emit_report
    result = BenchResult(variant_id=variant_id, client_latencies_ms=latencies,
                         summary=summarize_latencies(latencies, span_seconds=1.0),
                         server_summary=None, errors=0,
                         request_count=len(latencies), warmup_count=0)
    emit_report([result], "json", path)


def test_report_merges_inputs(tmp_path):
    _write_bench_json(tmp_path / "a.json", "cpu-run", [20.0, 20.0])
    _write_bench_json(tmp_path / "b.json", "gpu-run", [10.0, 10.0])
    out = tmp_path / "merged.csv"
    assert cli.main(["report", "--inputs", str(tmp_path / "a.json"),
                     str(tmp_path / "b.json"), "--baseline", "cpu-run",
                     "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert [r["variant_id"] for r in rows] == ["cpu-run", "gpu-run"]
    assert float(rows[0]["speedup_vs_baseline"]) == 1.0
    assert float(rows[1]["speedup_vs_baseline"]) == 2.0


def test_report_unknown_baseline_exits_1(tmp_path, capsys):
    _write_bench_json(tmp_path / "a.json", "cpu-run", [20.0])
    assert cli.main(["report", "--inputs", str(tmp_path / "a.json"),
                     "--baseline", "nope", "--out", str(tmp_path / "m.csv")]) == 1
    assert "unknown baseline" in capsys.readouterr().err


def test_bench_count_defaults_to_1000():
    args = cli.build_parser().parse_args(
        ["bench", "--server", "http://x", "--dataset", "d", "--out", "r.json"])
    assert args.count == 1000
    assert args.warmup == 10


def test_report_single_input_self_baseline(tmp_path):
    _write_bench_json(tmp_path / "a.json", "solo", [5.0, 7.0])
    out = tmp_path / "m.csv"
    assert cli.main(["report", "--inputs", str(tmp_path / "a.json"),
                     "--baseline", "solo", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert float(rows[0]["speedup_vs_baseline"]) == 1.0
