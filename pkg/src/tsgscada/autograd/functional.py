"""Differentiable building blocks used by the encoders, adapters and head.

conv3d and lstm are fused ops with hand-written backward passes; a
per-timestep graph would be far too slow in pure numpy.
"""
from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf, expit

from ..errors import ConfigError, DimensionError
from .tensor import Tensor, add, as_tensor, matmul, unbroadcast

ACTIVATIONS = ("gelu", "sigmoid", "tanh")
_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def linear(x, weight, bias=None):
    """y[..., o] = sum_i x[..., i] * weight[o, i] + bias[o]."""
    x, weight = as_tensor(x), as_tensor(weight)
    if weight.ndim != 2 or x.shape[-1] != weight.shape[1]:
        raise DimensionError(
            f"linear: input shape {x.shape} incompatible with weight shape {weight.shape}")
    w = weight.data
    xd = x.data

    def backward(g):
        gx = g @ w if x.requires_grad else None
        gw = None
        if weight.requires_grad:
            gw = g.reshape(-1, g.shape[-1]).T @ xd.reshape(-1, xd.shape[-1])
        return gx, gw

    out = Tensor._result(xd @ w.T, (x, weight), backward)
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (w.shape[0],):
            raise DimensionError(f"linear: bias shape {bias.shape} != ({w.shape[0]},)")
        out = add(out, bias)
    return out


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------

def sigmoid(x):
    x = as_tensor(x)
    s = expit(x.data)
    return Tensor._result(s, (x,), lambda g: (g * s * (1.0 - s),))


def tanh(x):
    x = as_tensor(x)
    t = np.tanh(x.data)
    return Tensor._result(t, (x,), lambda g: (g * (1.0 - t * t),))


def gelu(x):
    """Exact GELU, x * Phi(x)."""
    x = as_tensor(x)
    z = x.data
    cdf = 0.5 * (1.0 + erf(z * _INV_SQRT2))

    def backward(g):
        pdf = _INV_SQRT2PI * np.exp(-0.5 * z * z)
        return (g * (cdf + z * pdf),)

    return Tensor._result(z * cdf, (x,), backward)


def activation(x, kind):
    if kind == "gelu":
        return gelu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "tanh":
        return tanh(x)
    raise ConfigError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


# ---------------------------------------------------------------------------
# normalisation
# ---------------------------------------------------------------------------

def layer_normalize(x, axis=-1, eps=1e-5):
    """Affine-free normalisation to zero mean / unit variance along ``axis``."""
    x = as_tensor(x)
    mu = x.data.mean(axis=axis, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=axis, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv

    def backward(g):
        gm = g.mean(axis=axis, keepdims=True)
        gxm = (g * xhat).mean(axis=axis, keepdims=True)
        return (inv * (g - gm - xhat * gxm),)

    return Tensor._result(xhat, (x,), backward)


# ---------------------------------------------------------------------------
# convolutions
# ---------------------------------------------------------------------------

def dwconv1d(x, kernel):
    """Depthwise 1-D cross-correlation over the last axis, zero 'same' padding.

    x: [..., C, T], kernel: [C, k] with k odd.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if kernel.ndim != 2:
        raise DimensionError(f"dwconv1d: kernel must be [C, k], got {kernel.shape}")
    c, k = kernel.shape
    if k % 2 == 0:
        raise ConfigError(f"dwconv1d: kernel size must be odd, got {k}")
    if x.ndim < 2 or x.shape[-2] != c:
        raise DimensionError(f"dwconv1d: input {x.shape} does not match kernel {kernel.shape}")
    pad = (k - 1) // 2
    t = x.shape[-1]
    widths = [(0, 0)] * (x.ndim - 1) + [(pad, pad)]
    xp = np.pad(x.data, widths)
    w = kernel.data
    out = np.zeros(x.shape)
    for j in range(k):
        out += xp[..., j:j + t] * w[:, j:j + 1]

    def backward(g):
        gx = gk = None
        if x.requires_grad:
            gp = np.zeros(xp.shape)
            for j in range(k):
                gp[..., j:j + t] += g * w[:, j:j + 1]
            gx = gp[..., pad:pad + t]
        if kernel.requires_grad:
            gk = np.empty(w.shape)
            lead = tuple(range(x.ndim - 2)) + (x.ndim - 1,)
            for j in range(k):
                gk[:, j] = (g * xp[..., j:j + t]).sum(axis=lead)
        return gx, gk

    return Tensor._result(out, (x, kernel), backward)


def _triple(v):
    if isinstance(v, int):
        return (v, v, v)
    v = tuple(int(i) for i in v)
    if len(v) != 3:
        raise ConfigError(f"expected an int or a triple, got {v}")
    return v


def conv3d_output_shape(in_shape, kernel_shape, stride=1, padding=0):
    stride, padding = _triple(stride), _triple(padding)
    return tuple((n + 2 * p - k) // s + 1
                 for n, k, s, p in zip(in_shape, kernel_shape, stride, padding))


def conv3d(x, kernel, bias=None, stride=1, padding=0):
    """3-D cross-correlation.

    x: [C_in, T, H, W] or batched [N, C_in, T, H, W];
    kernel: [C_out, C_in, kt, kh, kw]; bias: [C_out] or None.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    stride, padding = _triple(stride), _triple(padding)
    if any(s < 1 for s in stride) or any(p < 0 for p in padding):
        raise ConfigError(f"conv3d: bad stride {stride} / padding {padding}")
    squeeze = x.ndim == 4
    if squeeze:
        x = x.reshape((1,) + x.shape)
    if x.ndim != 5 or kernel.ndim != 5:
        raise DimensionError(f"conv3d: input {x.shape} / kernel {kernel.shape} have wrong rank")
    n, cin = x.shape[:2]
    cout, kcin, kt, kh, kw = kernel.shape
    if kcin != cin:
        raise DimensionError(f"conv3d: input channels {x.shape} vs kernel {kernel.shape}")
    to, ho, wo = conv3d_output_shape(x.shape[2:], (kt, kh, kw), stride, padding)
    if min(to, ho, wo) < 1:
        raise DimensionError(
            f"conv3d: empty output volume for input {x.shape}, kernel {kernel.shape}, "
            f"stride {stride}, padding {padding}")
    st, sh, sw = stride
    pt, ph, pw = padding
    # channels-last throughout; the column order is (kt, kh, kw, c_in)
    t_in, h_in, w_in = x.shape[2:]
    xp = np.zeros((n, t_in + 2 * pt, h_in + 2 * ph, w_in + 2 * pw, cin))
    xp[:, pt:pt + t_in, ph:ph + h_in, pw:pw + w_in] = x.data.transpose(0, 2, 3, 4, 1)
    win = sliding_window_view(xp, (kt, kh, kw), axis=(1, 2, 3))
    win = win[:, ::st, ::sh, ::sw][:, :to, :ho, :wo]
    cols = win.transpose(0, 1, 2, 3, 5, 6, 7, 4).reshape(n * to * ho * wo, kt * kh * kw * cin)
    wr = kernel.data.transpose(0, 2, 3, 4, 1).reshape(cout, -1)
    out = (cols @ wr.T).reshape(n, to, ho, wo, cout).transpose(0, 4, 1, 2, 3)

    def backward(g):
        gx = gk = None
        g2 = g.transpose(0, 2, 3, 4, 1).reshape(-1, cout)
        if kernel.requires_grad:
            gk = (g2.T @ cols).reshape(cout, kt, kh, kw, cin).transpose(0, 4, 1, 2, 3)
        if x.requires_grad:
            dcols = (g2 @ wr).reshape(n, to, ho, wo, kt * kh * kw, cin)
            gp = np.zeros_like(xp)
            j = 0
            for a in range(kt):
                for b in range(kh):
                    for c in range(kw):
                        gp[:, a:a + st * to:st, b:b + sh * ho:sh, c:c + sw * wo:sw] += \
                            dcols[:, :, :, :, j]
                        j += 1
            gx = gp[:, pt:pt + t_in, ph:ph + h_in, pw:pw + w_in].transpose(0, 4, 1, 2, 3)
        return gx, gk

    y = Tensor._result(np.ascontiguousarray(out), (x, kernel), backward)
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (cout,):
            raise DimensionError(f"conv3d: bias shape {bias.shape} != ({cout},)")
        y = add(y, bias.reshape((cout, 1, 1, 1)))
    if squeeze:
        y = y.reshape(y.shape[1:])
    return y


# ---------------------------------------------------------------------------
# recurrence
# ---------------------------------------------------------------------------

def lstm(x, w_ih, w_hh, bias, reverse=False):
    """Single-direction LSTM over the time axis with zero initial state.

    x: [N, T, I]; w_ih: [4H, I]; w_hh: [4H, H]; bias: [4H].  Gate order is
    (input, forget, cell, output).  Returns hidden states [N, T, H]; with
    ``reverse`` the recurrence runs from the last step to the first.
    """
    x, w_ih, w_hh, bias = (as_tensor(t) for t in (x, w_ih, w_hh, bias))
    if x.ndim != 3:
        raise DimensionError(f"lstm: input must be [N, T, I], got {x.shape}")
    n, steps, isz = x.shape
    hsz = w_hh.shape[1]
    if w_ih.shape != (4 * hsz, isz) or w_hh.shape != (4 * hsz, hsz) or bias.shape != (4 * hsz,):
        raise DimensionError(
            f"lstm: weights {w_ih.shape}, {w_hh.shape}, {bias.shape} do not fit input {x.shape}")
    wih, whh = w_ih.data, w_hh.data
    # time-major buffers keep every per-step slice contiguous
    xt = x.data.transpose(1, 0, 2)
    if reverse:
        xt = xt[::-1]
    xt = np.ascontiguousarray(xt)
    gates = (xt.reshape(-1, isz) @ wih.T + bias.data).reshape(steps, n, 4 * hsz)
    cells = np.empty((steps, n, hsz))
    hs = np.empty((steps, n, hsz))
    whh_t = np.ascontiguousarray(whh.T)
    h = np.zeros((n, hsz))
    c = np.zeros((n, hsz))
    cell = slice(2 * hsz, 3 * hsz)
    for t in range(steps):
        a = gates[t]
        a += h @ whh_t
        zc = np.tanh(a[:, cell])
        expit(a, out=a)
        a[:, cell] = zc
        c = a[:, hsz:2 * hsz] * c + a[:, :hsz] * zc
        cells[t] = c
        h = hs[t]
        np.tanh(c, out=h)
        h *= a[:, 3 * hsz:]

    def backward(gout):
        gh_seq = gout.transpose(1, 0, 2)
        if reverse:
            gh_seq = gh_seq[::-1]
        dz_all = np.empty((steps, n, 4 * hsz))
        tanh_c = np.tanh(cells)
        dh_next = np.zeros((n, hsz))
        dc_next = np.zeros((n, hsz))
        zero = np.zeros((n, hsz))
        for t in range(steps - 1, -1, -1):
            a = gates[t]
            i, f, gg, o = a[:, :hsz], a[:, hsz:2 * hsz], a[:, cell], a[:, 3 * hsz:]
            tc = tanh_c[t]
            c_prev = cells[t - 1] if t > 0 else zero
            dh = gh_seq[t] + dh_next
            dc = dh * o * (1.0 - tc * tc) + dc_next
            dz = dz_all[t]
            dz[:, :hsz] = dc * gg * i * (1.0 - i)
            dz[:, hsz:2 * hsz] = dc * c_prev * f * (1.0 - f)
            dz[:, cell] = dc * i * (1.0 - gg * gg)
            dz[:, 3 * hsz:] = dh * tc * o * (1.0 - o)
            dc_next = dc * f
            dh_next = dz @ whh
        # step t pairs with h_{t-1}; the first step sees h = 0
        gwhh = dz_all[1:].reshape(-1, 4 * hsz).T @ hs[:-1].reshape(-1, hsz)
        flat = dz_all.reshape(-1, 4 * hsz)
        gx = None
        if x.requires_grad:
            gx = (flat @ wih).reshape(steps, n, isz)
            if reverse:
                gx = gx[::-1]
            gx = gx.transpose(1, 0, 2)
        gwih = flat.T @ xt.reshape(-1, isz) if w_ih.requires_grad else None
        gb = flat.sum(axis=0) if bias.requires_grad else None
        return gx, gwih, gwhh, gb

    out = hs.transpose(1, 0, 2)
    if reverse:
        out = out[:, ::-1]
    return Tensor._result(np.ascontiguousarray(out), (x, w_ih, w_hh, bias), backward)


__all__ = [
    "ACTIVATIONS", "activation", "conv3d", "conv3d_output_shape", "dwconv1d", "gelu",
    "layer_normalize", "linear", "lstm", "matmul", "sigmoid", "tanh", "unbroadcast",
]
