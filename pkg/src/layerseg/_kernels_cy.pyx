# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twin of _kernels_py.

Floating-point operation order matches the numpy backend tap for tap, so
row_conv_diff / row_conv_diff_adjoint / conv2d_forward and the input
gradient of conv2d_backward are bit-identical across backends; the weight
and bias gradients reduce over pixels (pairwise in numpy, sequential here)
and agree only to rounding noise.
"""

import numpy as np


def row_conv_diff(f, weights):
    f = np.ascontiguousarray(f, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    out_np = np.zeros_like(f)
    cdef double[:, ::1] fv = f
    cdef double[:, ::1] out = out_np
    cdef double[::1] wv = weights
    cdef Py_ssize_t Z = fv.shape[0], X = fv.shape[1], r = wv.shape[0] // 2
    cdef Py_ssize_t z, x, d, xx
    cdef double c, wd
    for d in range(-r, r + 1):
        if d == 0:
            continue
        wd = wv[d + r]
        for z in range(Z):
            for x in range(X):
                xx = x + d
                if xx < 0:
                    xx = 0
                elif xx >= X:
                    xx = X - 1
                out[z, x] = out[z, x] + wd * (fv[z, xx] - fv[z, x])
    return out_np


def row_conv_diff_adjoint(w, weights):
    w = np.ascontiguousarray(w, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    out_np = np.zeros_like(w)
    scat_np = np.empty(w.shape[1], dtype=np.float64)
    cdef double[:, ::1] wv = w
    cdef double[:, ::1] out = out_np
    cdef double[::1] kv = weights
    cdef double[::1] scat = scat_np
    cdef Py_ssize_t Z = wv.shape[0], X = wv.shape[1], r = kv.shape[0] // 2
    cdef Py_ssize_t z, x, d, e, lo
    cdef double wd, pile
    for d in range(-r, r + 1):
        if d == 0:
            continue
        wd = kv[d + r]
        for z in range(Z):
            if d > 0:
                for x in range(X):
                    scat[x] = wv[z, x - d] if x >= d else 0.0
                lo = X - d
                if lo < 0:
                    lo = 0
                pile = 0.0
                for x in range(lo, X):
                    pile = pile + wv[z, x]
                scat[X - 1] = scat[X - 1] + pile
            else:
                e = -d
                for x in range(X):
                    scat[x] = wv[z, x + e] if x + e < X else 0.0
                lo = e if e < X else X
                pile = 0.0
                for x in range(lo):
                    pile = pile + wv[z, x]
                scat[0] = scat[0] + pile
            for x in range(X):
                out[z, x] = out[z, x] + wd * (scat[x] - wv[z, x])
    return out_np


def _pad_edge(a):
    return np.pad(a, ((0, 0), (1, 1), (1, 1)), mode="edge")


def conv2d_forward(inp, weights, bias):
    inp = np.ascontiguousarray(inp, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    bias = np.ascontiguousarray(bias, dtype=np.float64)
    p = _pad_edge(inp)
    cdef Py_ssize_t c_in = inp.shape[0], Z = inp.shape[1], X = inp.shape[2]
    cdef Py_ssize_t c_out = weights.shape[0]
    out_np = np.empty((c_out, Z, X))
    cdef double[:, :, ::1] pv = p
    cdef double[:, :, :, ::1] wv = weights
    cdef double[::1] bv = bias
    cdef double[:, :, ::1] out = out_np
    cdef Py_ssize_t co, ci, dz, dx, z, x
    cdef double wt, b
    for co in range(c_out):
        b = bv[co]
        for z in range(Z):
            for x in range(X):
                out[co, z, x] = b
        for ci in range(c_in):
            for dz in range(3):
                for dx in range(3):
                    wt = wv[co, ci, dz, dx]
                    for z in range(Z):
                        for x in range(X):
                            out[co, z, x] = out[co, z, x] + wt * pv[ci, z + dz, x + dx]
    return out_np


def conv2d_backward(inp, weights, gout):
    inp = np.ascontiguousarray(inp, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    gout = np.ascontiguousarray(gout, dtype=np.float64)
    p = _pad_edge(inp)
    cdef Py_ssize_t c_in = inp.shape[0], Z = inp.shape[1], X = inp.shape[2]
    cdef Py_ssize_t c_out = weights.shape[0]
    gp_np = np.zeros_like(p)
    gw_np = np.zeros_like(weights)
    gb_np = np.empty(c_out)
    cdef double[:, :, ::1] pv = p
    cdef double[:, :, ::1] gp = gp_np
    cdef double[:, :, :, ::1] wv = weights
    cdef double[:, :, :, ::1] gw = gw_np
    cdef double[::1] gb = gb_np
    cdef double[:, :, ::1] gv = gout
    cdef Py_ssize_t co, ci, dz, dx, z, x
    cdef double wt, acc, g
    for co in range(c_out):
        acc = 0.0
        for z in range(Z):
            for x in range(X):
                acc = acc + gv[co, z, x]
        gb[co] = acc
        for ci in range(c_in):
            for dz in range(3):
                for dx in range(3):
                    wt = wv[co, ci, dz, dx]
                    acc = 0.0
                    for z in range(Z):
                        for x in range(X):
                            g = gv[co, z, x]
                            acc = acc + g * pv[ci, z + dz, x + dx]
                            gp[ci, z + dz, x + dx] = gp[ci, z + dz, x + dx] + wt * g
                    gw[co, ci, dz, dx] = acc
    ginp = gp_np[:, 1:-1, 1:-1].copy()
    ginp[:, 0, :] += gp_np[:, 0, 1:-1]
    ginp[:, -1, :] += gp_np[:, -1, 1:-1]
    ginp[:, :, 0] += gp_np[:, 1:-1, 0]
    ginp[:, :, -1] += gp_np[:, 1:-1, -1]
    ginp[:, 0, 0] += gp_np[:, 0, 0]
    ginp[:, 0, -1] += gp_np[:, 0, -1]
    ginp[:, -1, 0] += gp_np[:, -1, 0]
    ginp[:, -1, -1] += gp_np[:, -1, -1]
    return ginp, gw_np, gb_np
