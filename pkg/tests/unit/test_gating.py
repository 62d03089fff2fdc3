"""Unit tests for gating module."""

import numpy as np
import pytest

from gatessl.autograd import Tensor, mul, sum_
from gatessl.network.backbone import gated_block_forward
from gatessl.network.gating import (
    GATE_BIAS_INIT,
    GateParams,
    fixed_mask,
    gate_logits,
    sample_mask_eval,
    sample_mask_train,
)
from gatessl.utils.errors import ConfigurationError, ShapeError


def test_eval_mask_thresholds_at_zero():
    """Test eval masks open exactly the channels with non-negative logits."""
    logits = Tensor(np.array([[0.0, -1e-7, 3.0, -2.0]]))
    state = sample_mask_eval(logits)
    assert state.hard.tolist() == [[1.0, 0.0, 1.0, 0.0]]
    assert state.active.tolist() == [2]
    np.testing.assert_array_equal(state.mask.data, state.hard)


def test_train_mask_is_binary_with_soft_gradient():
    """Test training masks are hard in the forward pass and differentiable through the soft sample."""
    rng = np.random.default_rng(0)
    logits = Tensor(rng.normal(size=(4, 6)), requires_grad=True)
    state = sample_mask_train(logits, tau=1.0, rng=np.random.default_rng(1))
    assert set(np.unique(state.mask.data)) <= {0.0, 1.0}
    np.testing.assert_array_equal(state.mask.data, state.hard)
    assert np.all((state.soft.data > 0) & (state.soft.data < 1))
    np.testing.assert_array_equal(state.hard, (state.soft.data >= 0.5).astype(np.float32))

    sum_(state.mask).backward()
    s = state.soft.data
    np.testing.assert_allclose(logits.grad, s * (1 - s), rtol=1e-5)


def test_train_mask_relaxed_path():
    """Test disabling the straight-through estimator exposes the soft sample."""
    logits = Tensor(np.zeros((2, 3)))
    state = sample_mask_train(logits, 0.5, np.random.default_rng(2), straight_through_estimator=False)
    np.testing.assert_array_equal(state.mask.data, state.soft.data)


def test_train_mask_same_generator_same_sample():
    """Test samples are reproducible from the generator seed."""
    logits = Tensor(np.linspace(-2, 2, 10).reshape(2, 5))
    a = sample_mask_train(logits, 1.0, np.random.default_rng(5))
    b = sample_mask_train(logits, 1.0, np.random.default_rng(5))
    np.testing.assert_array_equal(a.hard, b.hard)


@pytest.mark.parametrize("tau", [0.0, -1.0])
def test_nonpositive_temperature(tau):
    """Test a non-positive temperature is a configuration error."""
    with pytest.raises(ConfigurationError):
        sample_mask_train(Tensor(np.zeros((1, 2))), tau, np.random.default_rng(0))


@pytest.mark.slow
def test_hard_sample_probability_matches_sigmoid():
    """Test P(hard = 1) equals sigmoid(logit) at every temperature."""
    draws = 100_000
    values = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
    expected = 1.0 / (1.0 + np.exp(-values))
    for tau in (0.5, 1.0, 5.0):
        logits = Tensor(np.broadcast_to(values, (draws, values.size)).copy())
        state = sample_mask_train(logits, tau, np.random.default_rng([17, int(tau * 10)]))
        observed = state.hard.mean(axis=0)
        sigma = np.sqrt(expected * (1 - expected) / draws)
        assert np.all(np.abs(observed - expected) <= 3 * sigma), (tau, observed, expected)


def test_fixed_mask_shape_check():
    """Test an imposed mask must match the logits."""
    logits = Tensor(np.zeros((2, 3)))
    state = fixed_mask(logits, np.array([[1, 0, 1], [0, 0, 1]]))
    assert state.active.tolist() == [2, 1]
    with pytest.raises(ShapeError):
        fixed_mask(logits, np.ones((2, 4)))


def test_gate_params_layout():
    """Test the gate maps C_in to C_out // r to C_out with the excite bias opened."""
    params = GateParams(c_in=4, c_out=8, reduction=4, rng=np.random.default_rng(0))
    assert params.hidden == 2
    assert params.squeeze.weight.shape == (2, 4)
    assert params.excite.weight.shape == (8, 2)
    np.testing.assert_array_equal(params.excite.bias.data, GATE_BIAS_INIT)
    assert params.excite.bias.no_decay
    with pytest.raises(ShapeError):
        GateParams(c_in=4, c_out=2, reduction=4, rng=np.random.default_rng(0))


def test_gate_logits_shape():
    """Test logits have one row of C_out values per sample and reject wrong inputs."""
    params = GateParams(c_in=3, c_out=4, reduction=2, rng=np.random.default_rng(0))
    x = Tensor(np.random.default_rng(1).normal(size=(5, 3, 4, 4)))
    assert gate_logits(x, params, training=True).shape == (5, 4)
    with pytest.raises(ShapeError):
        gate_logits(Tensor(np.zeros((5, 2, 4, 4))), params)


def test_closed_channels_do_not_reach_conv2(tiny_model, synthetic_batch):
    """Test a closed channel contributes nothing to the block output."""
    block = tiny_model.encoder.blocks[0]
    x = tiny_model.encoder.stem_forward(Tensor(synthetic_batch), training=False)
    mask = np.ones((8, block.geometry.c_out))
    mask[:, 0] = 0
    out_a, _ = gated_block_forward(x, "eval", block, mask_override=mask)

    # Perturbing the filter of a closed channel changes nothing
    block.conv1.weight.data[0] += 5.0
    out_b, _ = gated_block_forward(x, "eval", block, mask_override=mask)
    np.testing.assert_array_equal(out_a.data, out_b.data)


def test_gate_gradient_reaches_parameters(tiny_model, synthetic_batch):
    """Test the gate parameters receive gradient through the straight-through mask."""
    block = tiny_model.encoder.blocks[0]
    x = tiny_model.encoder.stem_forward(Tensor(synthetic_batch), training=True)
    out, state = gated_block_forward(x, "train", block, np.random.default_rng(3), tau=1.0)
    r = Tensor(np.random.default_rng(4).normal(size=out.shape).astype(np.float32))
    sum_(mul(out, r)).backward()
    assert block.gate.excite.weight.grad is not None
    assert np.any(block.gate.excite.weight.grad != 0)


def test_train_mode_needs_generator(tiny_model, synthetic_batch):
    """Test train-mode gating refuses to draw noise without a generator."""
    block = tiny_model.encoder.blocks[0]
    x = tiny_model.encoder.stem_forward(Tensor(synthetic_batch), training=True)
    with pytest.raises(ConfigurationError):
        gated_block_forward(x, "train", block)


def test_low_temperature_concentrates_samples():
    """Test soft samples collapse onto the hard mask as the temperature goes to zero."""
    logits = Tensor(np.random.default_rng(6).normal(size=(2000, 8)))
    state = sample_mask_train(logits, 0.01, np.random.default_rng(7))
    assert np.mean(np.abs(state.soft.data - state.hard)) < 0.01


def test_eval_mask_matches_majority_of_train_draws():
    """Test confident logits give the same decision in eval and in almost every train draw."""
    values = np.array([-9.0, -6.5, 6.5, 9.0])
    draws = 20_000
    logits = Tensor(np.broadcast_to(values, (draws, values.size)).copy())
    train = sample_mask_train(logits, 1.0, np.random.default_rng(8))
    eval_hard = sample_mask_eval(Tensor(values[None, :])).hard[0]

    majority = (train.hard.mean(axis=0) > 0.5).astype(eval_hard.dtype)
    np.testing.assert_array_equal(majority, eval_hard)
    agreement = (train.hard == eval_hard[None, :]).mean(axis=0)
    assert np.all(agreement > 0.997)


def test_gate_equivariant_to_channel_permutation():
    """Test permuting the excite rows permutes the logits and the eval mask the same way."""
    params = GateParams(c_in=3, c_out=6, reduction=2, rng=np.random.default_rng(9))
    params.excite.bias.data[...] = np.random.default_rng(10).normal(size=6)
    x = Tensor(np.random.default_rng(11).normal(size=(5, 3, 4, 4)))
    logits = gate_logits(x, params, training=False)

    perm = np.array([3, 0, 5, 1, 4, 2])
    params.excite.weight.data[...] = params.excite.weight.data[perm].copy()
    params.excite.bias.data[...] = params.excite.bias.data[perm].copy()
    permuted = gate_logits(x, params, training=False)

    np.testing.assert_allclose(permuted.data, logits.data[:, perm], rtol=1e-5, atol=1e-6)
    np.testing.assert_array_equal(sample_mask_eval(permuted).hard, sample_mask_eval(logits).hard[:, perm])


def test_straight_through_gradient_matches_soft_path():
    """Test the hard-forward gradient equals the relaxed gradient for a loss linear in the mask."""
    values = np.random.default_rng(12).normal(size=(4, 5))
    weights = Tensor(np.random.default_rng(13).normal(size=(4, 5)))
    grads = []
    for straight in (True, False):
        logits = Tensor(values, requires_grad=True)
        state = sample_mask_train(logits, 0.7, np.random.default_rng(14), straight_through_estimator=straight)
        sum_(mul(state.mask, weights)).backward()
        grads.append(logits.grad)

    np.testing.assert_allclose(grads[0], grads[1], rtol=1e-6, atol=1e-8)
    s = state.soft.data
    np.testing.assert_allclose(grads[1], weights.data * s * (1 - s) / 0.7, rtol=1e-4, atol=1e-6)
