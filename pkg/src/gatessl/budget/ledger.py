"""FLOP accounting for gated blocks and the budget losses built on it.

Counts are multiply-accumulates. Only gated blocks enter the ratio; the stem,
projection shortcuts and heads are reported for information. Per block

    dense   = k^2 C_in C_out H' W' + k^2 C_out C_out H'' W''
    overhead = C_in H W + C_in h + h C_out          (pool, two gate maps)
    dynamic = k^2 C_in a H' W' + k^2 a C_out H'' W'' + overhead

where ``a`` is the number of active channels (batch mean for the loss).
"""

from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Union

import numpy as np

from ..autograd import Tensor, abs_, mean, mul, power, relu, stack_scalars, sum_
from ..models.config import BudgetConfig
from ..network.backbone import BlockGeometry
from ..network.gating import GateState
from ..utils.errors import ShapeError


def conv_macs(kernel: int, c_in: int, c_out: int, h: int, w: int) -> int:
    return int(kernel * kernel * c_in * c_out * h * w)


def dense_flops(geometry: BlockGeometry) -> int:
    g = geometry
    return conv_macs(g.kernel, g.c_in, g.c_out, *g.mid_hw) + conv_macs(g.kernel, g.c_out, g.c_out, *g.out_hw)


def gate_overhead(geometry: BlockGeometry) -> int:
    g = geometry
    return int(g.c_in * g.in_hw[0] * g.in_hw[1] + g.c_in * g.hidden + g.hidden * g.c_out)


def macs_per_active_channel(geometry: BlockGeometry) -> int:
    """Conv MACs added by switching one channel on."""
    g = geometry
    return conv_macs(g.kernel, g.c_in, 1, *g.mid_hw) + conv_macs(g.kernel, 1, g.c_out, *g.out_hw)


def _check(state: GateState, geometry: BlockGeometry) -> None:
    if state.channels != geometry.c_out:
        raise ShapeError(f"{geometry.name}: gate state has {state.channels} channels, block has {geometry.c_out}")


def dynamic_flops(state: GateState, geometry: BlockGeometry) -> Tensor:
    """Batch-mean dynamic MACs as a scalar tensor, differentiable through the mask."""
    _check(state, geometry)
    active = mean(sum_(state.mask, axis=1))
    return mul(active, float(macs_per_active_channel(geometry))) + float(gate_overhead(geometry))


def hard_flops(mask: np.ndarray, geometry: BlockGeometry) -> np.ndarray:
    """Exact per-sample MACs (int64) for a hard 0/1 mask [B, C]."""
    mask = np.asarray(mask)
    if mask.ndim != 2 or mask.shape[1] != geometry.c_out:
        raise ShapeError(f"{geometry.name}: mask {mask.shape} does not fit {geometry.c_out} channels")
    active = (mask != 0).sum(axis=1).astype(np.int64)
    return active * macs_per_active_channel(geometry) + gate_overhead(geometry)


@dataclass
class BlockFlops:
    name: str
    dense: int
    overhead: int
    dynamic: Tensor

    @property
    def ratio(self) -> Tensor:
        return mul(self.dynamic, 1.0 / self.dense)


@dataclass
class FlopReport:
    """Per-block and network totals; ``ratio`` is sum(dynamic) / sum(dense)."""

    blocks: List[BlockFlops]
    ungated_flops: int = 0
    extras: Dict[str, float] = field(default_factory=dict)

    @property
    def total_dense(self) -> int:
        return int(sum(b.dense for b in self.blocks))

    @property
    def total_overhead(self) -> int:
        return int(sum(b.overhead for b in self.blocks))

    @property
    def total_dynamic(self) -> Tensor:
        total = self.blocks[0].dynamic
        for b in self.blocks[1:]:
            total = total + b.dynamic
        return total

    @property
    def ratio(self) -> Tensor:
        return mul(self.total_dynamic, 1.0 / self.total_dense)

    @property
    def block_ratios(self) -> List[Tensor]:
        return [b.ratio for b in self.blocks]


def flop_report(
    geometries: Sequence[BlockGeometry],
    views: Sequence[Sequence[GateState]],
    ungated: int = 0,
) -> FlopReport:
    """Ledger over one or more forward passes of equal batch size (e.g. the two views).

    Averaging the per-view batch means equals the batch mean over all views.
    """
    if not geometries:
        raise ShapeError("FLOP ledger needs at least one gated block")
    for states in views:
        if len(states) != len(geometries):
            raise ShapeError(f"got {len(states)} gate states for {len(geometries)} gated blocks")
    blocks = []
    for i, g in enumerate(geometries):
        per_view = [dynamic_flops(states[i], g) for states in views]
        dynamic = per_view[0]
        for extra in per_view[1:]:
            dynamic = dynamic + extra
        if len(per_view) > 1:
            dynamic = mul(dynamic, 1.0 / len(per_view))
        blocks.append(BlockFlops(name=g.name, dense=dense_flops(g), overhead=gate_overhead(g), dynamic=dynamic))
    return FlopReport(blocks=blocks, ungated_flops=int(ungated))


def sparsity_loss(report: FlopReport, cfg: BudgetConfig) -> Tensor:
    """lambda * (ratio - t_d)^2"""
    return mul(power(report.ratio - cfg.t_d, 2.0), cfg.lambda_)


def bound_margin(progress: float, cfg: BudgetConfig) -> float:
    """Dead band around t_d that widens linearly until ``bound_horizon`` of training."""
    opening = min(max(progress, 0.0) / cfg.bound_horizon, 1.0)
    return opening * (1.0 - min(cfg.t_d, 1.0 - cfg.t_d))


def bound_loss(ratios: Union[FlopReport, Sequence[Tensor]], progress: float, cfg: BudgetConfig) -> Tensor:
    """Mean over blocks of max(0, |r_l - t_d| - margin)^2 (unweighted by gamma)."""
    if isinstance(ratios, FlopReport):
        ratios = ratios.block_ratios
    stacked = stack_scalars(list(ratios))
    excess = relu(abs_(stacked - cfg.t_d) - bound_margin(progress, cfg))
    return mean(power(excess, 2.0))


def total_gating_loss(report: FlopReport, progress: float, cfg: BudgetConfig) -> Tensor:
    """Sparsity term plus gamma times the bound term."""
    return sparsity_loss(report, cfg) + mul(bound_loss(report, progress, cfg), cfg.gamma)


def ratio_from_active(geometries: Sequence[BlockGeometry], active_means: Sequence[float]) -> float:
    """Ledger ratio from per-block mean active channel counts."""
    if len(active_means) != len(geometries):
        raise ShapeError(f"got {len(active_means)} active counts for {len(geometries)} blocks")
    dynamic = sum(
        float(a) * macs_per_active_channel(g) + gate_overhead(g) for g, a in zip(geometries, active_means)
    )
    return dynamic / sum(dense_flops(g) for g in geometries)


def dense_total(geometries: Sequence[BlockGeometry]) -> int:
    return int(sum(dense_flops(g) for g in geometries))
