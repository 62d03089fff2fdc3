"""Residual encoder whose basic blocks gate the output channels of their first conv."""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..autograd import Tensor, add, channel_mask, conv_output_size, gap2d, relu
from ..models.config import BackboneConfig
from ..utils.errors import ConfigurationError, ShapeError
from .gating import GateParams, GateState, fixed_mask, gate_logits, sample_mask_eval, sample_mask_train
from .layers import BatchNorm, Conv2d
from .module import Module

MODES = ("train", "eval")


@dataclass(frozen=True)
class BlockGeometry:
    """Shapes a gated block sees; everything the FLOP ledger needs."""

    name: str
    c_in: int
    c_out: int
    kernel: int
    stride: int
    in_hw: Tuple[int, int]
    mid_hw: Tuple[int, int]
    out_hw: Tuple[int, int]
    hidden: int


def check_mode(mode: str) -> bool:
    if mode not in MODES:
        raise ConfigurationError(f"mode must be one of {MODES}, got {mode!r}", field="mode")
    return mode == "train"


class GatedBasicBlock(Module):
    """conv1 -> BN -> relu -> channel gate -> conv2 -> BN, plus an ungated shortcut."""

    def __init__(self, geometry: BlockGeometry, reduction: int, gated: bool, rng: np.random.Generator):
        super().__init__()
        g = geometry
        self.geometry = geometry
        self.conv1 = Conv2d(g.c_in, g.c_out, g.kernel, g.stride, rng)
        self.bn1 = BatchNorm(g.c_out)
        self.conv2 = Conv2d(g.c_out, g.c_out, g.kernel, 1, rng)
        self.bn2 = BatchNorm(g.c_out)
        self.projection: Optional[Conv2d] = None
        self.projection_bn: Optional[BatchNorm] = None
        if g.stride != 1 or g.c_in != g.c_out:
            self.projection = Conv2d(g.c_in, g.c_out, 1, g.stride, rng)
            self.projection_bn = BatchNorm(g.c_out)
        self.gate: Optional[GateParams] = GateParams(g.c_in, g.c_out, reduction, rng) if gated else None

    def shortcut(self, x: Tensor, training: bool) -> Tensor:
        if self.projection is None:
            return x
        return self.projection_bn(self.projection(x), training)

    def decide(
        self,
        x: Tensor,
        training: bool,
        rng: Optional[np.random.Generator],
        tau: float,
        straight_through: bool = True,
        mask_override: Optional[np.ndarray] = None,
    ) -> Optional[GateState]:
        if self.gate is None:
            if mask_override is not None:
                raise ShapeError(f"{self.geometry.name} is not gated; cannot apply a mask")
            return None
        logits = gate_logits(x, self.gate, training)
        if mask_override is not None:
            return fixed_mask(logits, mask_override)
        if training:
            if rng is None:
                raise ConfigurationError("train-mode gating needs an explicit random generator", field="rng")
            return sample_mask_train(logits, tau, rng, straight_through)
        return sample_mask_eval(logits)


def gated_block_forward(
    block_input: Tensor,
    mode: str,
    block: GatedBasicBlock,
    rng: Optional[np.random.Generator] = None,
    tau: float = 1.0,
    straight_through: bool = True,
    mask_override: Optional[np.ndarray] = None,
) -> Tuple[Tensor, Optional[GateState]]:
    """Run one block; returns the output and its gate decision (None if ungated)."""
    training = check_mode(mode)
    if block_input.ndim != 4 or block_input.shape[1] != block.geometry.c_in:
        raise ShapeError(f"{block.geometry.name}: expected [B,{block.geometry.c_in},H,W], got {block_input.shape}")
    state = block.decide(block_input, training, rng, tau, straight_through, mask_override)

    y = relu(block.bn1(block.conv1(block_input), training))
    if state is not None:
        y = channel_mask(y, state.mask)
    y = block.bn2(block.conv2(y), training)
    return relu(add(y, block.shortcut(block_input, training))), state


def block_geometries(cfg: BackboneConfig) -> List[BlockGeometry]:
    """Geometry of every block in order; stride 2 opens each stage after the first."""
    geometries = []
    side = cfg.input_side
    c_in = cfg.widths[0]
    k = cfg.kernel_size
    for s, width in enumerate(cfg.widths):
        for b in range(cfg.blocks_per_stage):
            stride = 2 if (s > 0 and b == 0) else 1
            mid = conv_output_size(side, k, stride, k // 2)
            geometries.append(BlockGeometry(
                name=f"stage{s + 1}.block{b}",
                c_in=c_in,
                c_out=width,
                kernel=k,
                stride=stride,
                in_hw=(side, side),
                mid_hw=(mid, mid),
                out_hw=(mid, mid),
                hidden=width // cfg.reduction if cfg.gated else 0,
            ))
            side, c_in = mid, width
    return geometries


class GatedResNet(Module):
    """Stem conv (3x3, no pooling), gated residual stages, global average pool."""

    def __init__(self, cfg: BackboneConfig, rng: np.random.Generator):
        super().__init__()
        self.config = cfg
        self.stem = Conv2d(3, cfg.widths[0], cfg.kernel_size, 1, rng)
        self.stem_bn = BatchNorm(cfg.widths[0])
        self.geometries = block_geometries(cfg)
        self.blocks = [GatedBasicBlock(g, cfg.reduction, cfg.gated, rng) for g in self.geometries]

    @property
    def gated(self) -> bool:
        return self.config.gated

    @property
    def embedding_dim(self) -> int:
        return self.config.embedding_dim

    def stem_forward(self, batch: Tensor, training: bool) -> Tensor:
        side = self.config.input_side
        if batch.ndim != 4 or batch.shape[1:] != (3, side, side):
            raise ShapeError(f"encoder expects [B,3,{side},{side}] input, got {batch.shape}")
        return relu(self.stem_bn(self.stem(batch), training))

    def encode(
        self,
        batch: Tensor,
        mode: str,
        rng: Optional[np.random.Generator] = None,
        tau: float = 1.0,
        straight_through: bool = True,
        mask_overrides: Optional[Sequence[Optional[np.ndarray]]] = None,
    ) -> Tuple[Tensor, List[GateState]]:
        """Embedding [B, d_enc] and the gate states of every gated block in order."""
        training = check_mode(mode)
        if mask_overrides is not None and len(mask_overrides) != len(self.blocks):
            raise ShapeError(f"expected {len(self.blocks)} mask overrides, got {len(mask_overrides)}")
        x = self.stem_forward(batch, training)
        states: List[GateState] = []
        for i, block in enumerate(self.blocks):
            override = mask_overrides[i] if mask_overrides is not None else None
            x, state = gated_block_forward(x, mode, block, rng, tau, straight_through, override)
            if state is not None:
                states.append(state)
        return gap2d(x), states

    def ungated_flops(self) -> int:
        """MACs of the stem conv and the projection shortcuts."""
        cfg = self.config
        side = cfg.input_side
        total = cfg.kernel_size ** 2 * 3 * cfg.widths[0] * side * side
        for g in self.geometries:
            if g.stride != 1 or g.c_in != g.c_out:
                total += g.c_in * g.c_out * g.out_hw[0] * g.out_hw[1]
        return int(total)
