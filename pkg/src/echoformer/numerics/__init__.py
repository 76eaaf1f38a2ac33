"""Differentiable numerics kernel: tensors, ops, and gradient checking."""

from .gradcheck import GradCheckReport, grad_check
from .ops import (
    absolute,
    activation,
    add,
    conv2d,
    div,
    dropout,
    gelu,
    layer_norm,
    leading_rows,
    linear,
    log,
    masked_softmax,
    matmul,
    mul,
    neg,
    permute,
    reduce_mean,
    reduce_sum,
    reshape,
    sigmoid,
    stack_scalars,
    sub,
    take_per_row,
    tanh,
)
from .tensor import Tensor, as_tensor, grad_enabled, no_grad, parameter

__all__ = [
    "GradCheckReport", "Tensor", "absolute", "activation", "add", "as_tensor",
    "conv2d", "div", "dropout", "gelu", "grad_check", "grad_enabled",
    "layer_norm", "leading_rows", "linear", "log", "masked_softmax", "matmul",
    "mul", "neg", "no_grad", "parameter", "permute", "reduce_mean",
    "reduce_sum", "reshape", "sigmoid", "stack_scalars", "sub",
    "take_per_row", "tanh",
]
