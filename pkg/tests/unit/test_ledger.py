"""Unit tests for budget ledger module."""

import numpy as np
import pytest

from gatessl.autograd import Tensor
from gatessl.budget.ledger import (
    BlockFlops,
    FlopReport,
    bound_loss,
    bound_margin,
    dense_flops,
    dense_total,
    dynamic_flops,
    flop_report,
    gate_overhead,
    hard_flops,
    macs_per_active_channel,
    ratio_from_active,
    sparsity_loss,
    total_gating_loss,
)
from gatessl.models.config import BackboneConfig, BudgetConfig
from gatessl.network.backbone import BlockGeometry, block_geometries
from gatessl.network.gating import fixed_mask, sample_mask_train
from gatessl.utils.errors import ShapeError

GEOMETRY = BlockGeometry(
    name="stage2.block0", c_in=4, c_out=8, kernel=3, stride=2,
    in_hw=(8, 8), mid_hw=(4, 4), out_hw=(4, 4), hidden=2,
)


def masks_state(mask):
    mask = np.asarray(mask, dtype=np.float32)
    return fixed_mask(Tensor(np.zeros(mask.shape)), mask)


def constant_report(ratio, blocks=1):
    """A report whose blocks all have the given dynamic/dense ratio."""
    return FlopReport(blocks=[
        BlockFlops(name=f"b{i}", dense=100, overhead=0, dynamic=Tensor(np.array(100.0 * ratio)))
        for i in range(blocks)
    ])


def test_block_counts():
    """Test dense, overhead and per-channel MACs of one strided block."""
    assert dense_flops(GEOMETRY) == 9 * 4 * 8 * 16 + 9 * 8 * 8 * 16 == 13824
    assert gate_overhead(GEOMETRY) == 4 * 64 + 4 * 2 + 2 * 8 == 280
    assert macs_per_active_channel(GEOMETRY) * GEOMETRY.c_out == dense_flops(GEOMETRY)


def test_hard_flops_extremes():
    """Test all-on costs dense plus overhead and all-off costs the overhead alone."""
    mask = np.zeros((2, 8))
    mask[0] = 1
    costs = hard_flops(mask, GEOMETRY)
    assert costs.dtype == np.int64
    assert costs.tolist() == [13824 + 280, 280]


def test_hard_flops_monotone():
    """Test closing a channel never increases the cost."""
    mask = np.ones((1, 8))
    previous = hard_flops(mask, GEOMETRY)[0]
    for c in range(8):
        mask[0, c] = 0
        current = hard_flops(mask, GEOMETRY)[0]
        assert current < previous
        previous = current


def test_hard_flops_shape_check():
    """Test a mask with the wrong channel count is rejected."""
    with pytest.raises(ShapeError):
        hard_flops(np.ones((2, 7)), GEOMETRY)


def test_dynamic_flops_is_batch_mean():
    """Test the differentiable count equals the mean of the per-sample counts."""
    mask = np.array([[1] * 8, [1] * 4 + [0] * 4, [0] * 8])
    value = dynamic_flops(masks_state(mask), GEOMETRY).item()
    assert value == pytest.approx(hard_flops(mask, GEOMETRY).mean(), rel=1e-6)


def test_dynamic_flops_channel_check():
    """Test a gate state for another block is rejected."""
    with pytest.raises(ShapeError):
        dynamic_flops(masks_state(np.ones((1, 4))), GEOMETRY)


def test_report_ratio_and_views():
    """Test the network ratio averages the views and sums blocks before dividing."""
    other = BlockGeometry("stage2.block1", 8, 8, 3, 1, (4, 4), (4, 4), (4, 4), 2)
    view1 = [masks_state(np.ones((2, 8))), masks_state(np.zeros((2, 8)))]
    view2 = [masks_state(np.zeros((2, 8))), masks_state(np.zeros((2, 8)))]
    report = flop_report([GEOMETRY, other], [view1, view2])
    dense = dense_flops(GEOMETRY) + dense_flops(other)
    dynamic = 0.5 * dense_flops(GEOMETRY) + gate_overhead(GEOMETRY) + gate_overhead(other)
    assert report.total_dense == dense == dense_total([GEOMETRY, other])
    assert report.total_overhead == gate_overhead(GEOMETRY) + gate_overhead(other)
    assert report.ratio.item() == pytest.approx(dynamic / dense, rel=1e-5)
    assert ratio_from_active([GEOMETRY, other], [4.0, 0.0]) == pytest.approx(dynamic / dense)


def test_report_rejects_state_count():
    """Test a view with the wrong number of gate states is rejected."""
    with pytest.raises(ShapeError):
        flop_report([GEOMETRY], [[]])
    with pytest.raises(ShapeError):
        flop_report([], [[]])


def test_ratio_convention_invariant():
    """Test doubling every count leaves the ratio unchanged."""
    report = constant_report(0.4, blocks=2)
    doubled = FlopReport(blocks=[
        BlockFlops(b.name, 2 * b.dense, 0, Tensor(2 * b.dynamic.data)) for b in report.blocks
    ])
    assert report.ratio.item() == pytest.approx(doubled.ratio.item())


def test_sparsity_loss():
    """Test the sparsity term is lambda times the squared distance to the target."""
    cfg = BudgetConfig(t_d=0.5, lambda_=5.0)
    assert sparsity_loss(constant_report(0.7), cfg).item() == pytest.approx(5.0 * 0.04, rel=1e-5)
    assert sparsity_loss(constant_report(0.5), cfg).item() == pytest.approx(0.0, abs=1e-7)


def test_bound_margin_schedule():
    """Test the dead band opens linearly to its final width."""
    cfg = BudgetConfig(t_d=0.3, bound_horizon=0.3)
    assert bound_margin(0.0, cfg) == 0.0
    assert bound_margin(0.15, cfg) == pytest.approx(0.5 * 0.7)
    assert bound_margin(0.3, cfg) == pytest.approx(0.7)
    assert bound_margin(1.0, cfg) == pytest.approx(0.7)


def test_bound_loss():
    """Test the bound term penalises only per-block ratios outside the margin."""
    cfg = BudgetConfig(t_d=0.5, bound_horizon=0.3)
    ratios = [Tensor(np.array(0.9)), Tensor(np.array(0.5))]
    assert bound_loss(ratios, 0.0, cfg).item() == pytest.approx(0.5 * 0.16, rel=1e-5)
    # Final margin is 0.5, so any ratio in [0, 1] is free
    assert bound_loss(ratios, 1.0, cfg).item() == 0.0


def test_total_loss_is_linear_in_weights():
    """Test the gating loss splits into its sparsity and weighted bound parts."""
    report = constant_report(0.9, blocks=2)
    both = total_gating_loss(report, 0.1, BudgetConfig(t_d=0.3, lambda_=2.0, gamma=3.0)).item()
    sparse_only = total_gating_loss(report, 0.1, BudgetConfig(t_d=0.3, lambda_=2.0, gamma=0.0)).item()
    bound_only = total_gating_loss(report, 0.1, BudgetConfig(t_d=0.3, lambda_=0.0, gamma=3.0)).item()
    assert both == pytest.approx(sparse_only + bound_only, rel=1e-5)


def test_gating_loss_gradient_reaches_logits():
    """Test the budget loss pushes gate logits down when the ratio is above target."""
    logits = Tensor(np.full((4, 8), 2.0), requires_grad=True)
    state = sample_mask_train(logits, 1.0, np.random.default_rng(0))
    report = flop_report([GEOMETRY], [[state]])
    total_gating_loss(report, 0.0, BudgetConfig(t_d=0.1)).backward()
    assert logits.grad is not None
    assert np.all(logits.grad >= 0)
    assert np.any(logits.grad > 0)


def test_desk_geometry_and_totals():
    """Test block geometry and ledger totals of the default CIFAR encoder."""
    geometries = block_geometries(BackboneConfig())
    assert [g.name for g in geometries] == [
        "stage1.block0", "stage1.block1", "stage2.block0", "stage2.block1", "stage3.block0", "stage3.block1",
    ]
    assert [g.stride for g in geometries] == [1, 1, 2, 1, 2, 1]
    assert [g.out_hw for g in geometries] == [(32, 32), (32, 32), (16, 16), (16, 16), (8, 8), (8, 8)]
    assert [(g.c_in, g.c_out) for g in geometries] == [(16, 16), (16, 16), (16, 32), (32, 32), (32, 64), (64, 64)]
    assert dense_total(geometries) == 25_952_256
    assert sum(gate_overhead(g) for g in geometries) == 74_368
