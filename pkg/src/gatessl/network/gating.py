"""Channel gates: squeeze-excite style logits and binary mask sampling.

Training uses the binary-concrete relaxation: with two independent Gumbel
draws per element, ``soft = sigmoid((logits + G1 - G0) / tau)`` and the hard
mask is ``soft >= 0.5``. The forward pass sees the hard mask; the backward
pass differentiates the soft one. Evaluation thresholds ``logits >= 0``.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..autograd import Tensor, gap2d, relu, sigmoid, straight_through
from ..utils.errors import ConfigurationError, ShapeError
from .layers import BatchNorm, Linear
from .module import Module

GATE_BIAS_INIT = 1.0


class GateParams(Module):
    """C_in -> C_out // r -> C_out map from pooled block input to channel logits."""

    def __init__(self, c_in: int, c_out: int, reduction: int, rng: np.random.Generator):
        super().__init__()
        hidden = c_out // reduction
        if hidden < 1:
            raise ShapeError(f"gate for {c_out} channels with reduction {reduction} has no hidden units")
        self.c_in, self.c_out, self.hidden = c_in, c_out, hidden
        self.squeeze = Linear(c_in, hidden, rng, bias=False)
        self.bn = BatchNorm(hidden)
        self.excite = Linear(hidden, c_out, rng, bias_init=GATE_BIAS_INIT, bias_no_decay=True)


def gate_logits(block_input: Tensor, params: GateParams, training: bool = True) -> Tensor:
    """logits = W1 relu(BN(W0 gap(x))) + b1, one row of C_out values per sample."""
    if block_input.ndim != 4 or block_input.shape[1] != params.c_in:
        raise ShapeError(f"gate expects [B,{params.c_in},H,W] input, got {block_input.shape}")
    z = gap2d(block_input)
    hidden = relu(params.bn(params.squeeze(z), training))
    return params.excite(hidden)


@dataclass
class GateState:
    """Gate decision for one block.

    ``mask`` is the tensor the block multiplies with: the straight-through
    hard sample in training, the soft relaxation when ``straight_through`` is
    off, and a constant 0/1 tensor in evaluation.
    """

    logits: Tensor
    soft: Tensor
    hard: np.ndarray
    mask: Tensor
    temperature: Optional[float] = None

    @property
    def active(self) -> np.ndarray:
        """Active channel count per sample."""
        return self.hard.sum(axis=1).astype(np.int64)

    @property
    def channels(self) -> int:
        return int(self.hard.shape[1])


def gumbel_difference(shape, rng: np.random.Generator, dtype) -> np.ndarray:
    g1 = rng.gumbel(size=shape)
    g0 = rng.gumbel(size=shape)
    return (g1 - g0).astype(dtype)


def sample_mask_train(
    logits: Tensor, tau: float, rng: np.random.Generator, straight_through_estimator: bool = True
) -> GateState:
    if tau <= 0:
        raise ConfigurationError(f"temperature must be positive, got {tau}", field="tau")
    noise = Tensor(gumbel_difference(logits.shape, rng, logits.dtype), dtype=logits.dtype)
    soft = sigmoid((logits + noise) * (1.0 / tau))
    hard = (soft.data >= 0.5).astype(logits.dtype)
    mask = straight_through(soft, hard) if straight_through_estimator else soft
    return GateState(logits=logits, soft=soft, hard=hard, mask=mask, temperature=tau)


def sample_mask_eval(logits: Tensor) -> GateState:
    hard = (logits.data >= 0).astype(logits.dtype)
    fixed = Tensor(hard, dtype=logits.dtype)
    return GateState(logits=logits, soft=fixed, hard=hard, mask=fixed)


def fixed_mask(logits: Tensor, mask: np.ndarray) -> GateState:
    """Gate state for an externally imposed mask (masked-dense execution)."""
    mask = np.asarray(mask, dtype=logits.dtype)
    if mask.shape != logits.shape:
        raise ShapeError(f"mask {mask.shape} does not match gate logits {logits.shape}")
    fixed = Tensor(mask, dtype=logits.dtype)
    return GateState(logits=logits, soft=fixed, hard=(mask != 0).astype(logits.dtype), mask=fixed)
