import pytest

from inferforge.errors import TargetError
from inferforge.targets import BUILTIN_PROFILES, TargetProfile, TargetRegistry


def test_builtin_table():
    reg = TargetRegistry()
    profiles = {p.name: p for p in reg.list_targets()}
    assert len(profiles) == 5
    assert profiles["AGX"].precisions == ("INT8",)
    assert profiles["ARM"].precisions == ("INT8",)
    assert profiles["CPU"].precisions == ("FP32",)
    assert profiles["ALVEO"].precisions == ("INT8",)
    assert profiles["GPU"].precisions == ("FP32", "FP16", "INT8")
    assert profiles["AGX"].platform_label == "Edge GPU"
    assert profiles["ALVEO"].platform_label == "Cloud FPGA"
    assert profiles["CPU"].platform_label == "x86 CPU"
    assert profiles["GPU"].default_precision == "FP16"


def test_listing_is_sorted_by_name():
    reg = TargetRegistry()
    names = [p.name for p in reg.list_targets()]
    assert names == sorted(names)


def test_register_extension():
    reg = TargetRegistry()
    tpu = TargetProfile(name="TPU", platform_label="Edge TPU", framework_label="custom",
                        precisions=("FP16",), default_precision="FP16")
    reg.register_target(tpu)
    assert len(reg.list_targets()) == 6
    assert [p.name for p in reg.list_targets()] == ["AGX", "ALVEO", "ARM", "CPU", "GPU", "TPU"]
    assert reg.get("TPU") is tpu


def test_duplicate_name_rejected():
    reg = TargetRegistry()
    with pytest.raises(TargetError, match="already registered"):
        reg.register_target(BUILTIN_PROFILES[2])  # CPU


def test_empty_name_rejected():
    with pytest.raises(TargetError, match="non-empty"):
        TargetProfile(name="", platform_label="x", framework_label="y",
                      precisions=("FP32",), default_precision="FP32")


def test_bad_precisions_rejected():
    with pytest.raises(TargetError, match="unknown precision"):
        TargetProfile(name="X", platform_label="x", framework_label="y",
                      precisions=("FP64",), default_precision="FP64")
    with pytest.raises(TargetError, match="default precision"):
        TargetProfile(name="X", platform_label="x", framework_label="y",
                      precisions=("FP32",), default_precision="FP16")


def test_unknown_lookup_mentions_registered():
    reg = TargetRegistry()
    with pytest.raises(TargetError, match="unknown target 'NPU'"):
        reg.get("NPU")


def test_resolve_precision():
    reg = TargetRegistry()
    gpu = reg.get("GPU")
    assert gpu.resolve_precision() == "FP16"
    assert gpu.resolve_precision("INT8") == "INT8"
    with pytest.raises(TargetError, match="supports"):
        reg.get("ARM").resolve_precision("FP32")
