"""Convolution, batch-norm and linear layers over the autograd ops."""

from typing import Optional

import numpy as np

from ..autograd import Tensor, batch_norm, conv2d, get_default_dtype, linear
from .module import Module, Parameter, uniform_init


class Conv2d(Module):
    """Bias-free square convolution with 'same' padding for stride 1."""

    def __init__(self, c_in: int, c_out: int, kernel: int, stride: int, rng: np.random.Generator):
        super().__init__()
        fan_in = c_in * kernel * kernel
        self.weight = Parameter(uniform_init(rng, (c_out, c_in, kernel, kernel), fan_in))
        self.stride = stride
        self.padding = kernel // 2
        self.kernel = kernel

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, stride=self.stride, padding=self.padding)


class BatchNorm(Module):
    """Batch norm over [B,C] or [B,C,H,W]; ``affine=False`` fixes gamma=1, beta=0."""

    momentum = 0.1
    eps = 1e-5

    def __init__(self, channels: int, affine: bool = True):
        super().__init__()
        self.channels = channels
        self.affine = affine
        dtype = get_default_dtype()
        if affine:
            self.gamma = Parameter(np.ones(channels), no_decay=True)
            self.beta = Parameter(np.zeros(channels), no_decay=True)
        self.register_buffer("running_mean", np.zeros(channels, dtype=dtype))
        self.register_buffer("running_var", np.ones(channels, dtype=dtype))

    def scale_shift(self):
        if self.affine:
            return self.gamma, self.beta
        dtype = self.running_mean.dtype
        return Tensor(np.ones(self.channels, dtype=dtype)), Tensor(np.zeros(self.channels, dtype=dtype))

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        gamma, beta = self.scale_shift()
        return batch_norm(
            x, gamma, beta,
            running_mean=self.running_mean, running_var=self.running_var,
            training=training, momentum=self.momentum, eps=self.eps,
        )


class Linear(Module):
    def __init__(
        self,
        d_in: int,
        d_out: int,
        rng: np.random.Generator,
        bias: bool = True,
        bias_init: Optional[float] = None,
        bias_no_decay: bool = False,
    ):
        super().__init__()
        self.weight = Parameter(uniform_init(rng, (d_out, d_in), d_in))
        if bias:
            value = np.full(d_out, bias_init) if bias_init is not None else uniform_init(rng, (d_out,), d_in)
            self.bias = Parameter(value, no_decay=bias_no_decay)
        else:
            self.bias = None

    def __call__(self, x: Tensor) -> Tensor:
        return linear(x, self.weight, self.bias)
