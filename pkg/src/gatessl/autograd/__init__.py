"""Minimal reverse-mode automatic differentiation over numpy arrays."""

from .functional import (
    abs_,
    add,
    batch_norm,
    batchnorm2d,
    channel_mask,
    conv2d,
    conv_output_size,
    gap2d,
    l2_normalize,
    linear,
    mean,
    mul,
    neg,
    power,
    relu,
    sigmoid,
    stack_scalars,
    stop_gradient,
    straight_through,
    sum_,
)
from .tensor import (
    Function,
    Tensor,
    as_tensor,
    check_finite,
    get_default_dtype,
    is_debug,
    is_grad_enabled,
    no_grad,
    precision,
    set_debug,
    set_default_dtype,
)

__all__ = [
    "Function",
    "Tensor",
    "abs_",
    "add",
    "as_tensor",
    "batch_norm",
    "batchnorm2d",
    "channel_mask",
    "check_finite",
    "conv2d",
    "conv_output_size",
    "gap2d",
    "get_default_dtype",
    "is_debug",
    "is_grad_enabled",
    "l2_normalize",
    "linear",
    "mean",
    "mul",
    "neg",
    "no_grad",
    "power",
    "precision",
    "relu",
    "set_debug",
    "set_default_dtype",
    "sigmoid",
    "stack_scalars",
    "stop_gradient",
    "straight_through",
    "sum_",
]
