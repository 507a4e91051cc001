"""Vectorized numpy kernels (fallback backend).

All kernels take and return float32 arrays and operate on a single sample:
spatial inputs are [h, w, channels]. Accumulation stays in float32 (im2col
plus a float32 matmul), matching what the compiled backend does.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv2d(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray, stride: int) -> np.ndarray:
    """Valid cross-correlation: x [h,w,cin], kernel [cout,cin,kh,kw], bias [cout]."""
    cout, cin, kh, kw = kernel.shape
    windows = sliding_window_view(x, (kh, kw), axis=(0, 1))[::stride, ::stride]
    oh, ow = windows.shape[:2]
    cols = np.ascontiguousarray(windows).reshape(oh * ow, cin * kh * kw)
    k2 = kernel.reshape(cout, cin * kh * kw)
    out = cols @ k2.T + bias
    return out.reshape(oh, ow, cout)


def dense(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Matrix product plus bias: x [in], weight [out,in], bias [out]."""
    return weight @ x + bias


def maxpool2d(x: np.ndarray, pool_h: int, pool_w: int, stride: int) -> np.ndarray:
    """Window max over valid positions: x [h,w,channels]."""
    windows = sliding_window_view(x, (pool_h, pool_w), axis=(0, 1))[::stride, ::stride]
    return windows.max(axis=(-2, -1))
