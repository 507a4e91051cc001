"""Target platform profiles and their registry.

Five built-in profiles pair a platform with an execution precision; the GPU
profile is the only one where the precision is configurable per deployment
(default FP16). New platform/precision pairings can be registered at runtime.
"""

from __future__ import annotations

from dataclasses import dataclass

from inferforge.errors import TargetError
from inferforge.quant import PRECISIONS


@dataclass(frozen=True)
class TargetProfile:
    name: str
    platform_label: str
    framework_label: str
    precisions: tuple[str, ...]
    default_precision: str

    def __post_init__(self):
        if not self.name:
            raise TargetError("target profile name must be non-empty")
        if not self.precisions:
            raise TargetError(f"target {self.name!r} must allow at least one precision")
        for p in self.precisions:
            if p not in PRECISIONS:
                raise TargetError(f"target {self.name!r} has unknown precision {p!r}")
        if self.default_precision not in self.precisions:
            raise TargetError(
                f"target {self.name!r} default precision {self.default_precision!r} "
                f"not among {self.precisions}")

    @property
    def precision_label(self) -> str:
        return "/".join(self.precisions)

    def resolve_precision(self, requested: str | None = None) -> str:
        """Pick the execution precision, validating any explicit request."""
        if requested is None:
            return self.default_precision
        if requested not in self.precisions:
            raise TargetError(
                f"target {self.name!r} supports {self.precision_label}, "
                f"not {requested!r}")
        return requested


def _builtin(name, platform, framework, precisions, default=None):
    return TargetProfile(name=name, platform_label=platform, framework_label=framework,
                         precisions=precisions, default_precision=default or precisions[0])


BUILTIN_PROFILES = (
    _builtin("AGX", "Edge GPU", "ONNX w/ TensorRT", ("INT8",)),
    _builtin("ARM", "ARM", "Tensorflow Lite", ("INT8",)),
    _builtin("CPU", "x86 CPU", "Tensorflow Lite", ("FP32",)),
    _builtin("ALVEO", "Cloud FPGA", "Vitis AI", ("INT8",)),
    _builtin("GPU", "GPU", "ONNX w/ TensorRT", ("FP32", "FP16", "INT8"), default="FP16"),
)


class TargetRegistry:
    """Name-keyed collection of target profiles, seeded with the built-ins."""

    def __init__(self, include_builtins: bool = True):
        self._profiles: dict[str, TargetProfile] = {}
        if include_builtins:
            for p in BUILTIN_PROFILES:
                self._profiles[p.name] = p

    def list_targets(self) -> list[TargetProfile]:
        return sorted(self._profiles.values(), key=lambda p: p.name)

    def register_target(self, profile: TargetProfile) -> None:
        if profile.name in self._profiles:
            raise TargetError(f"target {profile.name!r} is already registered")
        self._profiles[profile.name] = profile

    def get(self, name: str) -> TargetProfile:
        try:
            return self._profiles[name]
        except KeyError:
            raise TargetError(
                f"unknown target {name!r} (registered: "
                f"{', '.join(sorted(self._profiles))})") from None

    def __contains__(self, name: str) -> bool:
        return name in self._profiles


_default_registry = TargetRegistry()


def default_registry() -> TargetRegistry:
    return _default_registry


def list_targets() -> list[TargetProfile]:
    return _default_registry.list_targets()


def register_target(profile: TargetProfile) -> None:
    _default_registry.register_target(profile)
