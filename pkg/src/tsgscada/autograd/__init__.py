from .functional import (activation, conv3d, conv3d_output_shape, dwconv1d, gelu,
                         layer_normalize, linear, lstm, sigmoid, tanh)
from .gradcheck import max_relative_error, numerical_grad, sample_indices
from .serialize import load_arrays, save_arrays
from .tensor import (Parameter, Tensor, add, as_tensor, clip, concat, div, exp, grad_enabled,
                     log, matmul, mean, mul, neg, no_grad, reshape, smooth_l1, square, sub,
                     take, transpose, tsum)

__all__ = [
    "Parameter", "Tensor", "activation", "add", "as_tensor", "clip", "concat", "conv3d",
    "conv3d_output_shape", "div", "dwconv1d", "exp", "gelu", "grad_enabled", "layer_normalize",
    "linear", "load_arrays", "log", "lstm", "matmul", "max_relative_error", "mean", "mul", "neg",
    "no_grad", "numerical_grad", "sample_indices",
    "reshape", "save_arrays", "sigmoid", "smooth_l1", "square", "sub", "take", "tanh",
    "transpose", "tsum",
]
