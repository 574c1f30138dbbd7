"""Toy sentence encoder and 3-D convolutional video backbone."""
from __future__ import annotations

import numpy as np

from .autograd import Parameter, Tensor, activation, layer_normalize, matmul
from .errors import ConfigError, DimensionError, InputError
from .nn import Conv3d, Module


class SentenceEncoder(Module):
    """Embedding table followed by average pooling over tokens."""

    def __init__(self, vocab_size, d, rng):
        self.vocab_size = int(vocab_size)
        self.d = int(d)
        self.embedding = Parameter(rng.normal(0.0, 1.0, size=(vocab_size, d)))

    def pooling_matrix(self, token_lists):
        m = np.zeros((len(token_lists), self.vocab_size))
        for row, tokens in enumerate(token_lists):
            tokens = list(tokens)
            if not tokens:
                raise InputError("query has no tokens")
            for tok in tokens:
                if not 0 <= int(tok) < self.vocab_size:
                    raise InputError(f"unknown token id {tok} (vocab size {self.vocab_size})")
                m[row, int(tok)] += 1.0 / len(tokens)
        return m

    def encode_many(self, token_lists):
        """[N, d] sentence embeddings, one mean-pooled row per query."""
        return matmul(Tensor(self.pooling_matrix(token_lists)), self.embedding)

    def __call__(self, tokens):
        return self.encode_many([tokens]).reshape((self.d,))


class ConvBlock(Module):
    """conv3d (3x3x3, temporal stride 1) -> channel layer norm -> activation."""

    def __init__(self, c_in, c_out, spatial_stride, rng, kernel=3, act="gelu", eps=1e-5):
        pad = kernel // 2
        self.conv = Conv3d(c_in, c_out, kernel, rng, stride=(1, spatial_stride, spatial_stride),
                           padding=(pad, pad, pad))
        self.in_channels = c_in
        self.out_channels = c_out
        self.act = act
        self.eps = eps

    def __call__(self, x):
        y = self.conv(x)
        return activation(layer_normalize(y, axis=y.ndim - 4, eps=self.eps), self.act)


class VideoBackbone(Module):
    """Stack of ConvBlocks mapping [c0, T, H, W] clips to [d, T, h, w] features."""

    def __init__(self, in_channels, widths, d, spatial_strides, rng, kernel=3, act="gelu",
                 eps=1e-5):
        channels = [int(in_channels)] + [int(w) for w in widths] + [int(d)]
        if len(spatial_strides) != len(channels) - 1:
            raise ConfigError(
                f"backbone has {len(channels) - 1} blocks but {len(spatial_strides)} strides")
        if kernel % 2 == 0:
            raise ConfigError("backbone kernel size must be odd")
        self.blocks = [ConvBlock(channels[i], channels[i + 1], int(s), rng, kernel, act, eps)
                       for i, s in enumerate(spatial_strides)]
        self.channels = channels
        self.spatial_strides = [int(s) for s in spatial_strides]
        self.frozen = False

    def __len__(self):
        return len(self.blocks)

    def freeze(self, flag=True):
        self.frozen = bool(flag)
        self.set_trainable(not flag)

    def output_channels(self, index):
        return self.blocks[index].out_channels

    def spatial_size(self, index, height, width):
        """(h, w) after block ``index`` for an input of the given size."""
        h, w = height, width
        for s in self.spatial_strides[:index + 1]:
            h = (h - 1) // s + 1
            w = (w - 1) // s + 1
        return h, w

    def run(self, x, start=0, stop=None):
        for block in self.blocks[start:stop]:
            if x.shape[x.ndim - 4] != block.in_channels:
                raise DimensionError(
                    f"block expects {block.in_channels} channels, got input {x.shape}")
            x = block(x)
        return x

    def __call__(self, x):
        return self.run(x)


def spatial_pool(x):
    """Average over the two trailing spatial axes: [..., C, T, H, W] -> [..., C, T]."""
    return x.mean(axis=(-2, -1))


def encode_video(backbone, frames, q, adapters, insertion_points):
    """Run the backbone with SCADA adapters after the given blocks.

    Returns the pooled final feature ``x_b`` [d, T] (or [N, d, T] for batched
    input) and the list of outer-branch outputs, one per adapter.
    """
    if len(adapters) != len(insertion_points):
        raise ConfigError(
            f"{len(adapters)} adapters for {len(insertion_points)} insertion points")
    frames = frames if isinstance(frames, Tensor) else Tensor(frames)
    outers, x, start = [], frames, 0
    for adapter, point in zip(adapters, insertion_points):
        x = backbone.run(x, start, point + 1)
        if x.shape[x.ndim - 4] != adapter.channels:
            raise DimensionError(
                f"adapter expects {adapter.channels} channels, block {point} gives {x.shape}")
        outers.append(adapter.outer_branch(x, q))
        x = adapter.inner_branch(x, q)
        start = point + 1
    x = backbone.run(x, start)
    return spatial_pool(x), outers
