"""Parameter containers: a tiny module tree with dotted parameter names."""
from __future__ import annotations

import math

import numpy as np

from .autograd import Parameter, conv3d, linear


class Module:
    """Base class; parameters and sub-modules are discovered from attributes.

    Attribute order is definition order, so parameter names and checkpoint
    layout are deterministic.
    """

    def named_parameters(self, prefix=""):
        for key, value in vars(self).items():
            if isinstance(value, Parameter):
                yield prefix + key, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{key}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{key}.{i}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def num_parameters(self):
        return sum(p.size for p in self.parameters())

    def set_trainable(self, flag):
        for p in self.parameters():
            if flag:
                p.unfreeze()
            else:
                p.freeze()

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()


def uniform_init(rng, shape, fan_in):
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Linear(Module):
    def __init__(self, in_features, out_features, rng, zero=False, bias_value=None):
        if zero:
            w = np.zeros((out_features, in_features))
            b = np.zeros(out_features)
        else:
            w = uniform_init(rng, (out_features, in_features), in_features)
            b = uniform_init(rng, (out_features,), in_features)
        if bias_value is not None:
            b = np.full(out_features, float(bias_value))
        self.weight = Parameter(w)
        self.bias = Parameter(b)

    def __call__(self, x):
        return linear(x, self.weight, self.bias)


class Conv3d(Module):
    def __init__(self, in_channels, out_channels, kernel, rng, stride=1, padding=0, zero=False):
        kernel = (kernel,) * 3 if isinstance(kernel, int) else tuple(kernel)
        fan_in = in_channels * int(np.prod(kernel))
        shape = (out_channels, in_channels) + kernel
        if zero:
            w, b = np.zeros(shape), np.zeros(out_channels)
        else:
            w = uniform_init(rng, shape, fan_in)
            b = uniform_init(rng, (out_channels,), fan_in)
        self.weight = Parameter(w)
        self.bias = Parameter(b)
        self.stride = stride
        self.padding = padding

    def __call__(self, x):
        return conv3d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)
