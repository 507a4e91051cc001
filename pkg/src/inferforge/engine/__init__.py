"""Kernel backend selection.

The compiled extension is preferred when built; the numpy kernels are the
fallback. ``INFERFORGE_KERNELS=numpy|compiled`` forces a choice at import
time, and ``use_backend`` rebinds it later (benchmarks and tests only; not
safe while a server is processing requests).
"""

from __future__ import annotations

import os

from inferforge.engine import kernels_np

try:
    from inferforge.engine import _kernels_c
except ImportError:
    _kernels_c = None

_BACKENDS = {"numpy": kernels_np}
if _kernels_c is not None:
    _BACKENDS["compiled"] = _kernels_c

BACKEND = ""
conv2d = None
dense = None
maxpool2d = None


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def get_backend() -> str:
    return BACKEND


def use_backend(name: str) -> None:
    global BACKEND, conv2d, dense, maxpool2d
    try:
        impl = _BACKENDS[name]
    except KeyError:
        raise ValueError(
            f"kernel backend {name!r} not available (have {available_backends()})"
        ) from None
    BACKEND = name
    conv2d = impl.conv2d
    dense = impl.dense
    maxpool2d = impl.maxpool2d


_forced = os.environ.get("INFERFORGE_KERNELS")
if _forced:
    use_backend(_forced)
else:
    use_backend("compiled" if _kernels_c is not None else "numpy")
