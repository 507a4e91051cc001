# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled single-sample kernels for the hot inference loops.

Same contracts as kernels_np: float32 in, float32 out, [h, w, channels]
layout, float32 accumulators. The conv kernel is re-laid-out per call to
[kh, kw, cin, cout] so the innermost loop runs over contiguous memory.
"""

import numpy as np

cimport cython
cimport numpy as cnp


def conv2d(x, kernel, bias, int stride):
    cdef const cnp.float32_t[:, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float32)
    # [cout, cin, kh, kw] -> [kh, kw, cin, cout]: unit stride over output channels
    kt = np.ascontiguousarray(np.transpose(np.asarray(kernel, dtype=np.float32), (2, 3, 1, 0)))
    cdef const cnp.float32_t[:, :, :, ::1] kv = kt
    cdef const cnp.float32_t[::1] bv = np.ascontiguousarray(bias, dtype=np.float32)
    cdef Py_ssize_t h = xv.shape[0], w = xv.shape[1], cin = xv.shape[2]
    cdef Py_ssize_t kh = kv.shape[0], kw = kv.shape[1], cout = kv.shape[3]
    cdef Py_ssize_t oh = (h - kh) // stride + 1
    cdef Py_ssize_t ow = (w - kw) // stride + 1
    out = np.empty((oh, ow, cout), dtype=np.float32)
    cdef cnp.float32_t[:, :, ::1] ov = out
    cdef Py_ssize_t i, j, f, c, a, b
    cdef float xs
    cdef const cnp.float32_t[::1] krow
    with nogil:
        for i in range(oh):
            for j in range(ow):
                for f in range(cout):
                    ov[i, j, f] = bv[f]
                for a in range(kh):
                    for b in range(kw):
                        for c in range(cin):
                            xs = xv[i * stride + a, j * stride + b, c]
                            for f in range(cout):
                                ov[i, j, f] += xs * kv[a, b, c, f]
    return out


def dense(x, weight, bias):
    cdef const cnp.float32_t[::1] xv = np.ascontiguousarray(x, dtype=np.float32)
    cdef const cnp.float32_t[:, ::1] wv = np.ascontiguousarray(weight, dtype=np.float32)
    cdef const cnp.float32_t[::1] bv = np.ascontiguousarray(bias, dtype=np.float32)
    cdef Py_ssize_t n_out = wv.shape[0], n_in = wv.shape[1]
    out = np.empty(n_out, dtype=np.float32)
    cdef cnp.float32_t[::1] ov = out
    cdef Py_ssize_t o, i
    cdef float acc
    with nogil:
        for o in range(n_out):
            acc = 0.0
            for i in range(n_in):
                acc += wv[o, i] * xv[i]
            ov[o] = acc + bv[o]
    return out


def maxpool2d(x, int pool_h, int pool_w, int stride):
    cdef const cnp.float32_t[:, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float32)
    cdef Py_ssize_t h = xv.shape[0], w = xv.shape[1], c = xv.shape[2]
    cdef Py_ssize_t oh = (h - pool_h) // stride + 1
    cdef Py_ssize_t ow = (w - pool_w) // stride + 1
    out = np.empty((oh, ow, c), dtype=np.float32)
    cdef cnp.float32_t[:, :, ::1] ov = out
    cdef Py_ssize_t i, j, k, a, b
    cdef float best, v
    with nogil:
        for i in range(oh):
            for j in range(ow):
                for k in range(c):
                    best = xv[i * stride, j * stride, k]
                    for a in range(pool_h):
                        for b in range(pool_w):
                            v = xv[i * stride + a, j * stride + b, k]
                            if v > best:
                                best = v
                    ov[i, j, k] = best
    return out
