"""Unit tests for trainer module."""

import math

import numpy as np
import pytest

from gatessl.autograd import Tensor, precision
from gatessl.core.optimizer import SGD
from gatessl.core.schedule import lr_at, lr_for, tau_at
from gatessl.core.trainer import Trainer, train_step
from gatessl.data import load_split
from gatessl.models.config import RunConfig, TrainConfig
from gatessl.network.module import Parameter
from gatessl.network.objective import build_model, simsiam_loss
from gatessl.storage.checkpoint import load_checkpoint
from gatessl.storage.filesystem import RunDirectory
from gatessl.storage.index import CheckpointIndex
from gatessl.utils.errors import ArtifactMismatchError, ConfigurationError, NumericFaultError

from ..conftest import tiny_config_dict


def make_trainer(config, root=None):
    run_dir = RunDirectory(root or config.runtime.out_dir)
    model = build_model(config)
    return Trainer(config, model, load_split(config, "train"), run_dir)


def test_lr_warmup_and_cosine():
    """Test linear warmup to the base rate, then cosine decay reaching zero."""
    total, warmup, base = 20, 5, 0.1
    assert lr_at(0, total, base, warmup) == pytest.approx(base / warmup)
    assert lr_at(warmup - 1, total, base, warmup) == pytest.approx(base)
    assert lr_at(total - 1, total, base, warmup) == pytest.approx(0.0, abs=1e-12)
    decay = [lr_at(s, total, base, warmup) for s in range(warmup, total)]
    assert all(a > b for a, b in zip(decay, decay[1:]))
    assert lr_at(warmup, total, base, warmup) == pytest.approx(base * 0.5 * (1 + math.cos(math.pi / 15)))


def test_lr_without_warmup():
    """Test zero warmup starts on the cosine branch."""
    assert lr_at(0, 4, 1.0, 0) == pytest.approx(0.5 * (1 + math.cos(math.pi / 4)))


@pytest.mark.parametrize("step,total,warmup", [(-1, 10, 0), (10, 10, 0), (0, 10, 10)])
def test_lr_invalid(step, total, warmup):
    """Test out-of-range steps and over-long warmups are configuration errors."""
    with pytest.raises(ConfigurationError):
        lr_at(step, total, 0.1, warmup)


def test_lr_for_uses_epochs():
    """Test the per-epoch schedule expands to steps."""
    cfg = TrainConfig(epochs=4, warmup_epochs=1, base_lr=0.2)
    assert lr_for(2, 3, cfg) == pytest.approx(lr_at(2, 12, 0.2, 3))


def test_tau_anneal():
    """Test the temperature decays exponentially from start to end."""
    cfg = TrainConfig(epochs=3, warmup_epochs=0, tau_start=5.0, tau_end=0.5)
    assert tau_at(0, cfg) == pytest.approx(5.0)
    assert tau_at(1, cfg) == pytest.approx(math.sqrt(5.0 * 0.5))
    assert tau_at(2, cfg) == pytest.approx(0.5)
    assert tau_at(0, TrainConfig(epochs=1, warmup_epochs=0)) == pytest.approx(5.0)


def test_sgd_momentum_and_decay():
    """Test two SGD steps with momentum, weight decay and a decay-exempt parameter."""
    with precision(np.float64):
        w = Parameter(np.array([1.0]))
        b = Parameter(np.array([1.0]), no_decay=True)
        opt = SGD([("w", w), ("b", b)], momentum=0.9, weight_decay=0.1)
        assert opt.decayed() == ["w"]
        for _ in range(2):
            w.grad = np.array([0.5])
            b.grad = np.array([0.5])
            opt.step(0.1)
    assert w.data[0] == pytest.approx(0.8266)
    assert b.data[0] == pytest.approx(1.0 - 0.05 - 0.1 * (0.45 + 0.5))


def test_sgd_state_roundtrip():
    """Test velocity buffers restore exactly and reject a foreign layout."""
    p = Parameter(np.ones(3))
    opt = SGD([("p", p)], momentum=0.9, weight_decay=0.0)
    p.grad = np.full(3, 2.0, dtype=np.float32)
    opt.step(0.1)
    state = opt.state_dict()
    assert list(state) == ["optim/p"]

    fresh = SGD([("p", Parameter(np.ones(3)))], momentum=0.9, weight_decay=0.0)
    fresh.load_state_dict(state)
    np.testing.assert_array_equal(fresh.velocity["p"], opt.velocity["p"])
    with pytest.raises(ArtifactMismatchError):
        fresh.load_state_dict({"optim/q": np.zeros(3)})


def test_train_step_rejects_non_finite_loss(tiny_model, synthetic_batch, tiny_config, mocker):
    """Test a NaN loss stops the step before any parameter changes."""
    mocker.patch(
        "gatessl.core.trainer.simsiam_loss",
        return_value=Tensor(np.array(np.nan), requires_grad=True),
    )
    opt = SGD(list(tiny_model.named_parameters()), 0.9, 5e-4)
    before = tiny_model.encoder.stem.weight.data.copy()
    with pytest.raises(NumericFaultError):
        train_step(tiny_model, opt, synthetic_batch, synthetic_batch, tiny_config,
                   np.random.default_rng(0), 1.0, 0.1, 0.0)
    np.testing.assert_array_equal(tiny_model.encoder.stem.weight.data, before)


def test_train_step_updates_parameters(tiny_model, synthetic_batch, tiny_config):
    """Test one step reports finite losses and moves the gate parameters."""
    opt = SGD(list(tiny_model.named_parameters()), 0.9, 5e-4)
    before = tiny_model.encoder.blocks[0].gate.excite.weight.data.copy()
    metrics = train_step(tiny_model, opt, synthetic_batch, synthetic_batch[::-1].copy(), tiny_config,
                         np.random.default_rng(0), 1.0, 0.1, 0.0)
    assert np.isfinite(metrics.loss)
    assert metrics.loss == pytest.approx(metrics.loss_ssl + metrics.loss_gate, rel=1e-5)
    assert 0.0 < metrics.flop_ratio <= 1.1
    assert len(metrics.active) == 2
    assert not np.array_equal(tiny_model.encoder.blocks[0].gate.excite.weight.data, before)


def test_trainer_requires_full_batch(run_root):
    """Test a batch larger than the training set is a configuration error."""
    config = RunConfig.from_dict(tiny_config_dict(run_root, train={"batch_size": 64}))
    with pytest.raises(ConfigurationError) as info:
        make_trainer(config)
    assert info.value.field == "train.batch_size"


def test_fit_writes_run_artifacts(tiny_config):
    """Test a short run writes metrics, gate statistics and indexed checkpoints."""
    trainer = make_trainer(tiny_config)
    history = trainer.fit()
    run_dir = trainer.run_dir

    assert [m.epoch for m in history] == [1, 2]
    assert all(np.isfinite(m.loss_ssl) for m in history)
    rows = run_dir.serializer.read_csv(run_dir.metrics_path)
    assert [r["epoch"] for r in rows] == ["1", "2"]
    assert float(rows[-1]["lr"]) == pytest.approx(0.0, abs=1e-12)

    stats = run_dir.read_gate_stats()
    assert [s["epoch"] for s in stats] == [1, 2]
    assert stats[0]["blocks"] == ["stage1.block0", "stage2.block0"]

    entries = trainer.index.entries()
    assert [e["epoch"] for e in entries] == [1, 2]
    checkpoint = load_checkpoint(run_dir.get_path(entries[-1]["file"]))
    assert checkpoint.epoch == 2
    assert any(k.startswith("optim/") for k in checkpoint.arrays)
    assert checkpoint.metadata["steps_per_epoch"] == 3


def test_resume_matches_uninterrupted_run(tmp_path):
    """Test resuming after epoch 1 reproduces the uninterrupted metrics and weights."""
    straight = RunConfig.from_dict(tiny_config_dict(tmp_path / "a"))
    make_trainer(straight).fit()

    resumed = RunConfig.from_dict(tiny_config_dict(tmp_path / "b"))
    make_trainer(resumed).fit()
    index = CheckpointIndex(RunDirectory(tmp_path / "b"))
    data = index.load()
    data["checkpoints"] = data["checkpoints"][:1]
    data["latest"] = data["checkpoints"][0]["file"]
    index.save()

    trainer = make_trainer(resumed)
    history = trainer.fit(resume=True)
    assert [m.epoch for m in history] == [2]

    assert (tmp_path / "a" / "metrics.csv").read_text() == (tmp_path / "b" / "metrics.csv").read_text()
    assert (tmp_path / "a" / "gate_stats.jsonl").read_text() == (tmp_path / "b" / "gate_stats.jsonl").read_text()
    final_a = load_checkpoint(tmp_path / "a" / "checkpoints" / "epoch_0002.ckpt").arrays
    final_b = load_checkpoint(tmp_path / "b" / "checkpoints" / "epoch_0002.ckpt").arrays
    assert all(np.array_equal(final_a[k], final_b[k]) for k in final_a)


def test_resume_without_checkpoint_starts_fresh(tiny_config):
    """Test resume on an empty run directory trains from epoch 1."""
    history = make_trainer(tiny_config).fit(resume=True)
    assert [m.epoch for m in history] == [1, 2]


def test_resume_rejects_other_architecture(tiny_config):
    """Test resuming with a different backbone is an artifact mismatch."""
    make_trainer(tiny_config).fit()
    wider = RunConfig.from_dict(tiny_config_dict(tiny_config.runtime.out_dir, backbone={"widths": [4, 16]}))
    with pytest.raises(ArtifactMismatchError):
        make_trainer(wider).fit(resume=True)


def test_ungated_training(ungated_config):
    """Test the baseline trains without a gate loss or gate statistics."""
    trainer = make_trainer(ungated_config)
    history = trainer.fit()
    assert all(m.loss_gate == 0.0 and m.flop_ratio == 1.0 for m in history)
    assert not trainer.run_dir.gate_stats_path.exists()


def pure_simsiam_step(model, optimizer, x1, x2, rng, tau, lr):
    optimizer.zero_grad()
    out = model.forward_views(Tensor(x1), Tensor(x2), "train", rng, tau)
    simsiam_loss(out.p1, out.p2, out.z1, out.z2).backward()
    optimizer.step(lr)


def test_zero_budget_weights_match_plain_simsiam(run_root, synthetic_batch):
    """Test lambda = gamma = 0 gives the same update as the bare self-supervised step."""
    config = RunConfig.from_dict(tiny_config_dict(run_root, budget={"lambda": 0.0, "gamma": 0.0}))
    gated, plain = build_model(config), build_model(config)
    x2 = synthetic_batch[::-1].copy()

    opt = SGD(list(gated.named_parameters()), 0.9, 5e-4)
    metrics = train_step(gated, opt, synthetic_batch, x2, config, np.random.default_rng(0), 1.0, 0.1, 0.0)
    assert metrics.loss_gate == 0.0
    pure_simsiam_step(plain, SGD(list(plain.named_parameters()), 0.9, 5e-4),
                      synthetic_batch, x2, np.random.default_rng(0), 1.0, 0.1)

    for (name, a), (_, b) in zip(gated.named_parameters(), plain.named_parameters()):
        np.testing.assert_allclose(a.data, b.data, rtol=1e-6, atol=1e-7, err_msg=name)


def test_zero_learning_rate_keeps_parameters(tiny_model, synthetic_batch, tiny_config):
    """Test a step at lr = 0 leaves every parameter untouched."""
    before = {name: p.data.copy() for name, p in tiny_model.named_parameters()}
    opt = SGD(list(tiny_model.named_parameters()), 0.9, 5e-4)
    train_step(tiny_model, opt, synthetic_batch, synthetic_batch[::-1].copy(), tiny_config,
               np.random.default_rng(0), 1.0, 0.0, 0.0)
    for name, p in tiny_model.named_parameters():
        np.testing.assert_array_equal(p.data, before[name], err_msg=name)


def test_model_decay_exclusions(tiny_model):
    """Test batch-norm affine terms and every bias skip weight decay; weights do not."""
    params = dict(tiny_model.named_parameters())
    exempt = {name for name, p in params.items() if p.no_decay}
    assert exempt == {name for name in params if name.endswith((".gamma", ".beta", ".bias"))}
    assert "encoder.blocks.0.gate.excite.bias" in exempt
    assert "predictor.expand.bias" in exempt
    assert all(name.endswith(".weight") for name in SGD(list(params.items()), 0.9, 5e-4).decayed())


def test_decay_leaves_exempt_parameters_alone(tiny_model):
    """Test with zero gradients only decayed parameters shrink."""
    params = list(tiny_model.named_parameters())
    before = {name: p.data.copy() for name, p in params}
    opt = SGD(params, momentum=0.0, weight_decay=0.5)
    for _, p in params:
        p.grad = np.zeros_like(p.data)
    opt.step(0.1)
    for name, p in params:
        if p.no_decay:
            np.testing.assert_array_equal(p.data, before[name], err_msg=name)
        else:
            np.testing.assert_allclose(p.data, 0.95 * before[name], rtol=1e-6, err_msg=name)
