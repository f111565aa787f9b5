"""Numpy reference implementation of the hot kernels.

The compiled backend (_kernels_cy) mirrors these routines with identical
floating-point operation order, so the two backends agree bit-for-bit on
the forward paths (row convolutions, conv2d) and to rounding noise on the
reduction-heavy weight gradients.

Conventions: 2D fields are float64 arrays of shape (Z, X), rows contiguous;
multichannel images are (C, Z, X). All boundary handling is edge replication.
"""

import numpy as np


def _shift_clamped(f, d):
    X = f.shape[1]
    idx = np.clip(np.arange(X) + d, 0, X - 1)
    return f[:, idx]


def row_conv_diff(f, weights):
    """Per-row convolution minus identity: sum_d w[d] * (f[clamp(x+d)] - f[x]).

    Because the kernel weights sum to 1, this equals conv(f) - f evaluated
    without cancellation; it is exactly zero on constant rows.
    """
    f = np.ascontiguousarray(f, dtype=np.float64)
    r = len(weights) // 2
    out = np.zeros_like(f)
    for d in range(-r, r + 1):
        if d == 0:
            continue
        out += weights[d + r] * (_shift_clamped(f, d) - f)
    return out


def _scatter_clamped(w, d):
    # Adjoint of the clamped shift x -> clamp(x+d): out[x'] = sum of w[x]
    # over every x that lands on x'. Out-of-range sources pile up on the
    # boundary column.
    Z, X = w.shape
    out = np.zeros_like(w)
    if d > 0:
        if X > d:
            out[:, d:] = w[:, :X - d]
        out[:, X - 1] += w[:, max(X - d, 0):].sum(axis=1)
    elif d < 0:
        e = -d
        if X > e:
            out[:, :X - e] = w[:, e:]
        out[:, 0] += w[:, :min(e, X)].sum(axis=1)
    else:
        out[:] = w
    return out


def row_conv_diff_adjoint(w, weights):
    """Adjoint of row_conv_diff under the standard inner product."""
    w = np.ascontiguousarray(w, dtype=np.float64)
    r = len(weights) // 2
    out = np.zeros_like(w)
    for d in range(-r, r + 1):
        if d == 0:
            continue
        out += weights[d + r] * (_scatter_clamped(w, d) - w)
    return out


def _pad_edge(a):
    return np.pad(a, ((0, 0), (1, 1), (1, 1)), mode="edge")


def conv2d_forward(inp, weights, bias):
    """3x3 same convolution with edge-replicate padding.

    inp: (C_in, Z, X), weights: (C_out, C_in, 3, 3), bias: (C_out,).
    """
    inp = np.ascontiguousarray(inp, dtype=np.float64)
    c_out = weights.shape[0]
    c_in, Z, X = inp.shape
    p = _pad_edge(inp)
    out = np.empty((c_out, Z, X))
    for co in range(c_out):
        acc = np.full((Z, X), bias[co])
        for ci in range(c_in):
            for dz in range(3):
                for dx in range(3):
                    acc += weights[co, ci, dz, dx] * p[ci, dz:dz + Z, dx:dx + X]
        out[co] = acc
    return out


def conv2d_backward(inp, weights, gout):
    """Gradients of conv2d_forward: returns (g_input, g_weights, g_bias)."""
    inp = np.ascontiguousarray(inp, dtype=np.float64)
    gout = np.ascontiguousarray(gout, dtype=np.float64)
    c_out = weights.shape[0]
    c_in, Z, X = inp.shape
    p = _pad_edge(inp)
    gp = np.zeros_like(p)
    gw = np.zeros_like(weights)
    gb = np.empty(c_out)
    for co in range(c_out):
        g = gout[co]
        gb[co] = g.sum()
        for ci in range(c_in):
            for dz in range(3):
                for dx in range(3):
                    gw[co, ci, dz, dx] = (g * p[ci, dz:dz + Z, dx:dx + X]).sum()
                    gp[ci, dz:dz + Z, dx:dx + X] += weights[co, ci, dz, dx] * g
    ginp = gp[:, 1:-1, 1:-1].copy()
    # Padding replicated edge values, so edge gradients fold back in.
    ginp[:, 0, :] += gp[:, 0, 1:-1]
    ginp[:, -1, :] += gp[:, -1, 1:-1]
    ginp[:, :, 0] += gp[:, 1:-1, 0]
    ginp[:, :, -1] += gp[:, 1:-1, -1]
    ginp[:, 0, 0] += gp[:, 0, 0]
    ginp[:, 0, -1] += gp[:, 0, -1]
    ginp[:, -1, 0] += gp[:, -1, 0]
    ginp[:, -1, -1] += gp[:, -1, -1]
    return ginp, gw, gb
