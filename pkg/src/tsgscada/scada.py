"""Sentence Conditioned Adapter (SCADA).

Inner branch (feeds the next backbone block)::

    x'      = act(fc_down(x))                     per position, channels c -> c/gamma
    x''     = dwconv_t(norm(x' * fc_sentence(q)))  depthwise conv along time
    x_inner = x + act(fc_up(x''))

Outer branch (skips the rest of the backbone)::

    x'_out  = act(conv3d_down(x))                 c -> c/gamma, space / beta
    x''_out = norm(x'_out * fc_sentence_outer(q))
    x_out   = spatial_mean(act(conv3d_up(x''_out)))  c/gamma -> d, space / 2

The sentence projection is one vector per query, broadcast over every
(t, h, w) position.  ``fc_up`` and ``conv3d_up`` start at zero so a freshly
inserted adapter leaves the backbone output untouched.
"""
from __future__ import annotations

import numpy as np

from .autograd import Parameter, Tensor, activation, dwconv1d, layer_normalize
from .errors import ConfigError, DimensionError
from .nn import Conv3d, Linear, Module, uniform_init


class ScadaBlock(Module):
    def __init__(self, channels, d, rng, gamma=4, beta=2, kernel=3, act="gelu", eps=1e-5,
                 text_free=False):
        if channels % gamma:
            raise ConfigError(f"gamma={gamma} does not divide adapter width {channels}")
        if kernel % 2 == 0:
            raise ConfigError(f"dwconv kernel size must be odd, got {kernel}")
        if beta < 1:
            raise ConfigError(f"beta must be >= 1, got {beta}")
        r = channels // gamma
        self.channels, self.d, self.reduced = channels, d, r
        self.gamma, self.beta = gamma, beta
        self.act, self.eps = act, eps
        self.text_free = bool(text_free)
        # inner branch
        self.fc_down = Linear(channels, r, rng)
        self.fc_sentence_inner = Linear(d, r, rng, bias_value=1.0)
        self.dwconv = Parameter(uniform_init(rng, (r, kernel), kernel))
        self.fc_up = Linear(r, channels, rng, zero=True)
        # outer branch
        self.conv3d_down = Conv3d(channels, r, (1, 3, 3), rng, stride=(1, beta, beta),
                                  padding=(0, 1, 1))
        self.fc_sentence_outer = Linear(d, r, rng, bias_value=1.0)
        self.conv3d_up = Conv3d(r, d, (1, 3, 3), rng, stride=(1, 2, 2), padding=(0, 1, 1),
                                zero=True)

    def set_text_free(self, flag):
        self.text_free = bool(flag)

    def _modulation(self, fc, q, batch):
        """Per-query channel vector [N, r] (all ones when text-free)."""
        if self.text_free:
            return Tensor(np.ones((batch, self.reduced)))
        return fc(q)

    def _check(self, x):
        if x.ndim != 5 or x.shape[1] != self.channels:
            raise DimensionError(
                f"adapter expects [N, {self.channels}, t, h, w] features, got {x.shape}")

    def inner_branch(self, x, q):
        x, q, single = _batched(x, q)
        self._check(x)
        n, c, t, h, w = x.shape
        xr = x.transpose((0, 2, 3, 4, 1))                                    # N t h w c
        x1 = activation(self.fc_down(xr), self.act)                          # N t h w r
        m = self._modulation(self.fc_sentence_inner, q, n).reshape((n, 1, 1, 1, self.reduced))
        z = layer_normalize(x1 * m, axis=-1, eps=self.eps)
        z = dwconv1d(z.transpose((0, 2, 3, 4, 1)), self.dwconv)              # N h w r t
        up = activation(self.fc_up(z.transpose((0, 4, 1, 2, 3))), self.act)  # N t h w c
        out = x + up.transpose((0, 4, 1, 2, 3))
        return out.reshape(out.shape[1:]) if single else out

    def outer_branch(self, x, q):
        x, q, single = _batched(x, q)
        self._check(x)
        n = x.shape[0]
        h, w = x.shape[3], x.shape[4]
        if h % self.beta or w % self.beta:
            raise ConfigError(f"beta={self.beta} does not divide spatial size {h}x{w}")
        a = activation(self.conv3d_down(x), self.act)                        # N r t h' w'
        m = self._modulation(self.fc_sentence_outer, q, n).reshape((n, self.reduced, 1, 1, 1))
        z = layer_normalize(a * m, axis=1, eps=self.eps)
        u = activation(self.conv3d_up(z), self.act)                          # N d t h'' w''
        out = u.mean(axis=(-2, -1))
        return out.reshape(out.shape[1:]) if single else out

    def __call__(self, x, q):
        return self.inner_branch(x, q), self.outer_branch(x, q)


def _batched(x, q):
    x = x if isinstance(x, Tensor) else Tensor(x)
    q = q if isinstance(q, Tensor) else Tensor(q)
    single = x.ndim == 4
    if single:
        x = x.reshape((1,) + x.shape)
    if q.ndim == 1:
        q = q.reshape((1,) + q.shape)
    if q.shape[0] != x.shape[0]:
        raise DimensionError(f"{x.shape[0]} feature maps but {q.shape[0]} queries")
    return x, q, single


def aggregate(x_b, outers, eps=1e-5):
    """F = norm(x_b + sum(outers)) over the channel axis ([d, T] or [N, d, T])."""
    total = x_b
    for o in outers:
        if o.shape != x_b.shape:
            raise DimensionError(f"aggregate: outer shape {o.shape} != backbone shape {x_b.shape}")
        total = total + o
    return layer_normalize(total, axis=-2, eps=eps)


def text_free_variant(adapters, flag):
    """Replace every sentence projection by ones (or restore it)."""
    for a in adapters:
        a.set_text_free(flag)


def build_adapters(backbone, d, insertion_points, rng, gamma=4, beta=2, kernel=3, act="gelu",
                   eps=1e-5, text_free=False):
    points = list(insertion_points)
    if sorted(set(points)) != points:
        raise ConfigError(f"insertion points must be strictly increasing, got {points}")
    for p in points:
        if not 0 <= p < len(backbone):
            raise ConfigError(f"insertion point {p} outside backbone of {len(backbone)} blocks")
    return [ScadaBlock(backbone.output_channels(p), d, rng, gamma, beta, kernel, act, eps,
                       text_free) for p in points]
