"""Tensor and the reverse-mode graph engine.

A ``Tensor`` wraps a numpy array. Every differentiable op is a ``Function``
subclass whose ``apply`` runs ``forward`` on raw arrays and, when gradients
are needed, records itself as the creator of the output. ``Tensor.backward``
walks the recorded graph once in reverse topological order and accumulates
``dLoss/dLeaf`` into the ``grad`` slot of every leaf that requires it.
"""

import threading
from contextlib import contextmanager
from typing import Any, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..utils.errors import GradientError, NumericFaultError

ArrayLike = Union[np.ndarray, float, int, Sequence[float]]

_default_dtype = np.dtype(np.float32)
_debug = False
_grad_state = threading.local()


def get_default_dtype() -> np.dtype:
    """Precision used for new tensors (float32 unless switched)."""
    return _default_dtype


def set_default_dtype(dtype: Any) -> None:
    global _default_dtype
    _default_dtype = np.dtype(dtype)


@contextmanager
def precision(dtype: Any) -> Iterator[None]:
    """Temporarily switch the default precision, e.g. to float64 for gradient checks."""
    previous = _default_dtype
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(previous)


def set_debug(enabled: bool) -> None:
    """Turn NaN/Inf detection after every op on or off."""
    global _debug
    _debug = bool(enabled)


def is_debug() -> bool:
    return _debug


def is_grad_enabled() -> bool:
    return getattr(_grad_state, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Run ops without recording a graph (per thread)."""
    previous = is_grad_enabled()
    _grad_state.enabled = False
    try:
        yield
    finally:
        _grad_state.enabled = previous


def check_finite(array: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(array)):
        raise NumericFaultError(f"non-finite values produced by {where}")


class Function:
    """Base class for differentiable operations.

    Subclasses implement ``forward`` on numpy arrays and ``backward``, which maps
    the gradient of the output to one gradient (or ``None``) per input tensor.
    """

    def __init__(self, *inputs: "Tensor"):
        self.inputs = inputs

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError("Forward pass not implemented for this function")

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError("Backward pass not implemented for this function")

    @classmethod
    def apply(cls, *inputs: "Tensor", **kwargs: Any) -> "Tensor":
        fn = cls(*inputs)
        out = fn.forward(*(t.data for t in inputs), **kwargs)
        if _debug:
            check_finite(out, f"{cls.__name__}.forward")
        requires_grad = is_grad_enabled() and any(t.requires_grad for t in inputs)
        result = Tensor(out, requires_grad=requires_grad, dtype=out.dtype)
        if requires_grad:
            result.creator = fn
        return result


class Tensor:
    """Dense n-dimensional array with an optional gradient slot."""

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        name: Optional[str] = None,
        dtype: Optional[Any] = None,
    ):
        self.data = np.asarray(data, dtype=dtype if dtype is not None else _default_dtype)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.creator: Optional[Function] = None
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self.creator is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, dtype=self.data.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, grad: np.ndarray) -> None:
        if grad.shape != self.data.shape:
            grad = np.broadcast_to(grad, self.data.shape)
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.data.dtype, copy=True)
        else:
            self.grad += grad

    def _topological_order(self) -> List["Tensor"]:
        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            if node.creator is not None:
                for parent in node.creator.inputs:
                    if parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))
        return order

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every leaf that requires grad."""
        if self.data.size != 1:
            raise GradientError(f"backward needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise GradientError("loss does not depend on any tensor that requires grad")

        order = self._topological_order()
        pending = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            grad = pending.pop(id(node), None)
            if grad is None:
                continue
            if node.creator is None:
                node._accumulate(grad)
                continue
            fn = node.creator
            input_grads = fn.backward(grad)
            for parent, parent_grad in zip(fn.inputs, input_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                if _debug:
                    check_finite(parent_grad, f"{type(fn).__name__}.backward")
                key = id(parent)
                if key in pending:
                    pending[key] = pending[key] + parent_grad
                else:
                    pending[key] = parent_grad

    # Operator sugar over the closed op set in ``functional``

    def __add__(self, other: Union["Tensor", float]) -> "Tensor":
        from . import functional as F
        return F.add(self, other)

    def __radd__(self, other: Union["Tensor", float]) -> "Tensor":
        from . import functional as F
        return F.add(other, self)

    def __sub__(self, other: Union["Tensor", float]) -> "Tensor":
        from . import functional as F
        if not isinstance(other, Tensor):
            return F.add(self, -float(other))
        return F.add(self, F.neg(other))

    def __rsub__(self, other: Union["Tensor", float]) -> "Tensor":
        from . import functional as F
        return F.add(other, F.neg(self))

    def __mul__(self, other: Union["Tensor", float]) -> "Tensor":
        from . import functional as F
        return F.mul(self, other)

    def __rmul__(self, other: Union["Tensor", float]) -> "Tensor":
        from . import functional as F
        return F.mul(other, self)

    def __truediv__(self, other: Union["Tensor", float]) -> "Tensor":
        from . import functional as F
        if isinstance(other, Tensor):
            return F.mul(self, F.power(other, -1.0))
        return F.mul(self, 1.0 / float(other))

    def __neg__(self) -> "Tensor":
        from . import functional as F
        return F.neg(self)

    def __pow__(self, exponent: float) -> "Tensor":
        from . import functional as F
        return F.power(self, exponent)

    def sum(self, axis: Optional[Union[int, Tuple[int, ...]]] = None) -> "Tensor":
        from . import functional as F
        return F.sum_(self, axis=axis)

    def mean(self, axis: Optional[Union[int, Tuple[int, ...]]] = None) -> "Tensor":
        from . import functional as F
        return F.mean(self, axis=axis)

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad}{label})"


def as_tensor(value: Union[Tensor, ArrayLike], dtype: Optional[Any] = None) -> Tensor:
    """Wrap constants as non-differentiable tensors; pass tensors through."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value, requires_grad=False, dtype=dtype)
