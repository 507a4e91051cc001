from __future__ import annotations

import pytest

from inferforge.compose import ServerConfig, compose_server_bundle
from inferforge.quant import convert
from inferforge.targets import default_registry


def make_bundle(out_dir, graph, config: ServerConfig | None = None, target: str = "CPU",
                calib=None, precision: str | None = None):
    """Convert + compose one bundle; returns its directory."""
    registry = default_registry()
    variant = convert(graph, registry.get(target), calib, precision=precision)
    compose_server_bundle(variant, config or ServerConfig(), out_dir, registry=registry)
    return out_dir


@pytest.fixture
def bundle_factory(tmp_path):
    counter = [0]

    def factory(graph, config=None, target="CPU", calib=None, precision=None):
        counter[0] += 1
        return make_bundle(tmp_path / f"bundle{counter[0]}", graph, config, target,
                           calib, precision)

    return factory
