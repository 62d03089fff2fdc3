"""The closed set of differentiable ops used by the gated network and its losses.

Elementwise binary ops accept operands of identical shape or a scalar operand;
there is no general broadcasting. Convolution is computed as strided windows
contracted against the filter bank with ``np.tensordot`` (im2col formulation).
"""

from typing import Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..utils.errors import DegenerateInputError, ShapeError
from .tensor import Function, Tensor, as_tensor

Axis = Optional[Union[int, Tuple[int, ...]]]


def _pair(x: Union[Tensor, float], y: Union[Tensor, float]) -> Tuple[Tensor, Tensor]:
    """Lift constants to tensors in the dtype of the tensor operand."""
    if isinstance(x, Tensor) and not isinstance(y, Tensor):
        return x, as_tensor(y, dtype=x.dtype)
    if isinstance(y, Tensor) and not isinstance(x, Tensor):
        return as_tensor(x, dtype=y.dtype), y
    return as_tensor(x), as_tensor(y)


def _check_elementwise(x: np.ndarray, y: np.ndarray, op: str) -> None:
    if x.shape != y.shape and x.size != 1 and y.size != 1:
        raise ShapeError(f"{op}: shapes {x.shape} and {y.shape} differ and neither is a scalar")


def _reduce_to(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    return np.asarray(grad.sum()).reshape(shape)


# Elementwise

class Add(Function):
    def forward(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        _check_elementwise(x, y, "add")
        self.shapes = (x.shape, y.shape)
        return x + y

    def backward(self, grad):
        return _reduce_to(grad, self.shapes[0]), _reduce_to(grad, self.shapes[1])


class Mul(Function):
    def forward(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        _check_elementwise(x, y, "mul")
        self.x, self.y = x, y
        return x * y

    def backward(self, grad):
        return (
            _reduce_to(grad * self.y, self.x.shape),
            _reduce_to(grad * self.x, self.y.shape),
        )


class Pow(Function):
    def forward(self, x: np.ndarray, exponent: float) -> np.ndarray:
        self.x, self.exponent = x, exponent
        return np.power(x, exponent)

    def backward(self, grad):
        return (grad * self.exponent * np.power(self.x, self.exponent - 1),)


class Abs(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.sign = np.sign(x)
        return np.abs(x)

    def backward(self, grad):
        return (grad * self.sign,)


class Relu(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.positive = x > 0
        return np.where(self.positive, x, np.zeros_like(x))

    def backward(self, grad):
        return (grad * self.positive,)


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype, copy=False)


class Sigmoid(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.out = _stable_sigmoid(x)
        return self.out

    def backward(self, grad):
        return (grad * self.out * (1.0 - self.out),)


# Reductions

class Sum(Function):
    def forward(self, x: np.ndarray, axis: Axis = None) -> np.ndarray:
        self.shape, self.axis = x.shape, axis
        return np.asarray(x.sum(axis=axis))

    def backward(self, grad):
        if self.axis is not None:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad, self.shape).copy(),)


# Graph plumbing

class StackScalars(Function):
    """Collect scalar tensors into one vector of length L."""

    def forward(self, *scalars: np.ndarray) -> np.ndarray:
        if any(s.size != 1 for s in scalars):
            raise ShapeError("stack_scalars: every operand must hold exactly one value")
        self.shapes = [s.shape for s in scalars]
        return np.array([s.reshape(()) for s in scalars], dtype=np.result_type(*scalars))

    def backward(self, grad):
        return tuple(grad[i].reshape(shape) for i, shape in enumerate(self.shapes))


class StopGradient(Function):
    """Forward identity; contributes no gradient to its input."""

    def forward(self, x: np.ndarray) -> np.ndarray:
        return x.copy()

    def backward(self, grad):
        return (None,)


class StraightThrough(Function):
    """Outputs the hard sample; routes the incoming gradient to the soft relaxation."""

    def forward(self, soft: np.ndarray, hard: np.ndarray) -> np.ndarray:
        if hard.shape != soft.shape:
            raise ShapeError(f"straight_through: hard {hard.shape} vs soft {soft.shape}")
        return hard.astype(soft.dtype, copy=True)

    def backward(self, grad):
        return (grad,)


class ChannelMask(Function):
    """x[B,C,H,W] scaled by a per-sample channel mask m[B,C]."""

    def forward(self, x: np.ndarray, mask: np.ndarray) -> np.ndarray:
        if x.ndim != 4 or mask.shape != x.shape[:2]:
            raise ShapeError(f"channel_mask: mask {mask.shape} does not fit input {x.shape}")
        self.x, self.mask = x, mask
        return x * mask[:, :, None, None]

    def backward(self, grad):
        return grad * self.mask[:, :, None, None], (grad * self.x).sum(axis=(2, 3))


# Layers

class Linear(Function):
    def forward(self, x: np.ndarray, weight: np.ndarray, bias: Optional[np.ndarray] = None) -> np.ndarray:
        if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
            raise ShapeError(f"linear: input {x.shape} does not fit weight {weight.shape}")
        if bias is not None and bias.shape != (weight.shape[0],):
            raise ShapeError(f"linear: bias {bias.shape} does not fit weight {weight.shape}")
        self.x, self.weight = x, weight
        out = x @ weight.T
        return out + bias if bias is not None else out

    def backward(self, grad):
        grads = [grad @ self.weight, grad.T @ self.x]
        if len(self.inputs) == 3:
            grads.append(grad.sum(axis=0))
        return tuple(grads)


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


class Conv2d(Function):
    """Cross-correlation of x[B,C_in,H,W] with weight[C_out,C_in,k,k], no bias."""

    def forward(self, x: np.ndarray, weight: np.ndarray, stride: int = 1, padding: int = 0) -> np.ndarray:
        if x.ndim != 4 or weight.ndim != 4:
            raise ShapeError(f"conv2d: expected 4-D input and weight, got {x.shape} and {weight.shape}")
        c_out, c_in, kh, kw = weight.shape
        if x.shape[1] != c_in:
            raise ShapeError(f"conv2d: input has {x.shape[1]} channels, weight expects {c_in}")
        if kh != kw or kh % 2 == 0:
            raise ShapeError(f"conv2d: kernel must be square and odd, got {kh}x{kw}")
        if stride < 1 or padding < 0:
            raise ShapeError(f"conv2d: invalid stride {stride} / padding {padding}")
        h_out = conv_output_size(x.shape[2], kh, stride, padding)
        w_out = conv_output_size(x.shape[3], kw, stride, padding)
        if h_out < 1 or w_out < 1:
            raise ShapeError(f"conv2d: output would be empty for input {x.shape} and kernel {kh}")

        self.x_shape, self.weight = x.shape, weight
        self.stride, self.padding, self.k = stride, padding, kh
        self.out_hw = (h_out, w_out)

        padded = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x
        windows = sliding_window_view(padded, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
        self.windows = windows[:, :, :h_out, :w_out]
        out = np.tensordot(self.windows, weight, axes=([1, 4, 5], [1, 2, 3]))
        return np.ascontiguousarray(out.transpose(0, 3, 1, 2))

    def backward(self, grad):
        b, c_in, h, w = self.x_shape
        k, s, p = self.k, self.stride, self.padding
        h_out, w_out = self.out_hw

        grad_weight = np.tensordot(grad, self.windows, axes=([0, 2, 3], [0, 2, 3]))

        grad_input = None
        if self.inputs[0].requires_grad:
            cols = np.tensordot(grad, self.weight, axes=([1], [0]))  # B,H',W',C_in,k,k
            padded = np.zeros((b, c_in, h + 2 * p, w + 2 * p), dtype=grad.dtype)
            for i in range(k):
                for j in range(k):
                    padded[:, :, i:i + s * h_out:s, j:j + s * w_out:s] += cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            grad_input = padded[:, :, p:p + h, p:p + w] if p else padded
        return grad_input, grad_weight


class BatchNorm(Function):
    """Batch normalisation over every axis but the channel axis (1).

    Train mode normalises with biased batch statistics and folds the batch mean
    and unbiased variance into the running buffers in place; eval mode uses the
    running buffers.
    """

    def forward(
        self,
        x: np.ndarray,
        gamma: np.ndarray,
        beta: np.ndarray,
        running_mean: Optional[np.ndarray] = None,
        running_var: Optional[np.ndarray] = None,
        training: bool = True,
        momentum: float = 0.1,
        eps: float = 1e-5,
    ) -> np.ndarray:
        if x.ndim not in (2, 4):
            raise ShapeError(f"batch_norm: expected [B,C] or [B,C,H,W], got {x.shape}")
        channels = x.shape[1]
        if gamma.shape != (channels,) or beta.shape != (channels,):
            raise ShapeError(f"batch_norm: affine parameters do not match {channels} channels")
        axes = (0,) if x.ndim == 2 else (0, 2, 3)
        view = (1, channels) if x.ndim == 2 else (1, channels, 1, 1)
        count = x.size // channels

        if training:
            if count < 2:
                raise ShapeError(f"batch_norm: train mode needs at least 2 values per channel, got {count}")
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            if running_mean is not None and running_var is not None:
                running_mean *= 1.0 - momentum
                running_mean += momentum * mean
                running_var *= 1.0 - momentum
                running_var += momentum * var * count / (count - 1)
        else:
            if running_mean is None or running_var is None:
                raise ShapeError("batch_norm: eval mode needs running statistics")
            mean, var = running_mean, running_var

        inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype, copy=False)
        x_hat = (x - mean.astype(x.dtype, copy=False).reshape(view)) * inv_std.reshape(view)

        self.training, self.axes, self.view, self.count = training, axes, view, count
        self.x_hat, self.inv_std, self.gamma = x_hat, inv_std, gamma
        return x_hat * gamma.reshape(view) + beta.reshape(view)

    def backward(self, grad):
        view, axes = self.view, self.axes
        grad_gamma = (grad * self.x_hat).sum(axis=axes)
        grad_beta = grad.sum(axis=axes)
        g_hat = grad * self.gamma.reshape(view)
        inv_std = self.inv_std.reshape(view)
        if self.training:
            n = self.count
            grad_x = inv_std / n * (
                n * g_hat
                - g_hat.sum(axis=axes, keepdims=True)
                - self.x_hat * (g_hat * self.x_hat).sum(axis=axes, keepdims=True)
            )
        else:
            grad_x = g_hat * inv_std
        return grad_x, grad_gamma, grad_beta


class GlobalAvgPool(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 4:
            raise ShapeError(f"gap2d: expected [B,C,H,W], got {x.shape}")
        self.shape = x.shape
        return x.mean(axis=(2, 3))

    def backward(self, grad):
        b, c, h, w = self.shape
        return (np.broadcast_to(grad[:, :, None, None] / (h * w), self.shape).copy(),)


class L2Normalize(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 2:
            raise ShapeError(f"l2_normalize: expected [B,d], got {x.shape}")
        norm = np.sqrt((x * x).sum(axis=1, keepdims=True))
        if np.any(norm == 0):
            rows = np.flatnonzero(norm[:, 0] == 0).tolist()
            raise DegenerateInputError(f"l2_normalize: zero-norm rows {rows[:8]}")
        self.norm = norm
        self.out = x / norm
        return self.out

    def backward(self, grad):
        y = self.out
        return ((grad - y * (grad * y).sum(axis=1, keepdims=True)) / self.norm,)


# Functional entry points

def add(x: Union[Tensor, float], y: Union[Tensor, float]) -> Tensor:
    return Add.apply(*_pair(x, y))


def mul(x: Union[Tensor, float], y: Union[Tensor, float]) -> Tensor:
    return Mul.apply(*_pair(x, y))


def neg(x: Union[Tensor, float]) -> Tensor:
    if not isinstance(x, Tensor):
        return as_tensor(-x)
    return mul(x, -1.0)


def power(x: Tensor, exponent: float) -> Tensor:
    return Pow.apply(x, exponent=float(exponent))


def abs_(x: Tensor) -> Tensor:
    return Abs.apply(x)


def relu(x: Tensor) -> Tensor:
    return Relu.apply(x)


def sigmoid(x: Tensor) -> Tensor:
    return Sigmoid.apply(x)


def sum_(x: Tensor, axis: Axis = None) -> Tensor:
    return Sum.apply(x, axis=axis)


def mean(x: Tensor, axis: Axis = None) -> Tensor:
    if axis is None:
        count = x.data.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        count = int(np.prod([x.shape[a] for a in axes]))
    return mul(sum_(x, axis=axis), 1.0 / count)


def stop_gradient(x: Tensor) -> Tensor:
    return StopGradient.apply(x)


def straight_through(soft: Tensor, hard: np.ndarray) -> Tensor:
    return StraightThrough.apply(soft, hard=np.asarray(hard))


def stack_scalars(scalars: Sequence[Tensor]) -> Tensor:
    if not scalars:
        raise ShapeError("stack_scalars: nothing to stack")
    return StackScalars.apply(*scalars)


def channel_mask(x: Tensor, mask: Tensor) -> Tensor:
    return ChannelMask.apply(x, mask)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    if bias is None:
        return Linear.apply(x, weight)
    return Linear.apply(x, weight, bias)


def conv2d(x: Tensor, weight: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    return Conv2d.apply(x, weight, stride=stride, padding=padding)


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: Optional[np.ndarray] = None,
    running_var: Optional[np.ndarray] = None,
    training: bool = True,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    return BatchNorm.apply(
        x, gamma, beta,
        running_mean=running_mean, running_var=running_var,
        training=training, momentum=momentum, eps=eps,
    )


def batchnorm2d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: Optional[np.ndarray] = None,
    running_var: Optional[np.ndarray] = None,
    training: bool = True,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    if x.ndim != 4:
        raise ShapeError(f"batchnorm2d: expected [B,C,H,W], got {x.shape}")
    return batch_norm(x, gamma, beta, running_mean, running_var, training, momentum, eps)


def gap2d(x: Tensor) -> Tensor:
    return GlobalAvgPool.apply(x)


def l2_normalize(x: Tensor) -> Tensor:
    return L2Normalize.apply(x)
