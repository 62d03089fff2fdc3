"""Pytest configuration and fixtures."""

from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import pytest

from gatessl.autograd import Tensor, precision
from gatessl.models.config import RunConfig
from gatessl.network.objective import build_model
from gatessl.storage.checkpoint import save_checkpoint
from gatessl.storage.filesystem import RunDirectory
from gatessl.utils.config import ENV_KEYS

GRAD_EPS = 1e-6
GRAD_RTOL = 1e-4
GRAD_ATOL = 1e-7


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    """Keep GATESSL_* variables from the developer's shell out of the tests."""
    for var in ENV_KEYS:
        monkeypatch.delenv(var, raising=False)


def tiny_config_dict(out_dir: Path, **sections) -> dict:
    data = {
        "data": {
            "dataset": "synthetic",
            "synthetic_classes": 3,
            "synthetic_per_class": 8,
            "synthetic_val_per_class": 4,
        },
        "backbone": {"widths": [4, 8], "blocks_per_stage": 1, "input_side": 8, "reduction": 2},
        "heads": {"proj_hidden_dim": 8, "proj_output_dim": 8, "pred_hidden_dim": 4},
        "train": {"epochs": 2, "batch_size": 8, "warmup_epochs": 0, "checkpoint_every": 1, "seed": 3},
        "eval": {"batch_size": 5},
        "runtime": {"out_dir": str(out_dir)},
    }
    for name, values in sections.items():
        data.setdefault(name, {}).update(values)
    return data


@pytest.fixture
def run_root(tmp_path) -> Path:
    return tmp_path / "run"


@pytest.fixture
def tiny_config(run_root) -> RunConfig:
    """Two gated blocks on 8x8 synthetic images; trains in well under a second per epoch."""
    return RunConfig.from_dict(tiny_config_dict(run_root))


@pytest.fixture
def ungated_config(run_root) -> RunConfig:
    return RunConfig.from_dict(tiny_config_dict(run_root, backbone={"gated": False}))


@pytest.fixture
def tiny_model(tiny_config):
    return build_model(tiny_config)


@pytest.fixture
def run_dir(run_root) -> RunDirectory:
    return RunDirectory(run_root)


@pytest.fixture
def synthetic_batch():
    """Eight random images shaped like the tiny config's input."""
    rng = np.random.default_rng(11)
    return rng.uniform(0.0, 1.0, size=(8, 3, 8, 8)).astype(np.float32)


def set_gate_bias(model, value: float, zero_weights: bool = True) -> None:
    """Force eval-mode gate decisions: positive bias opens every channel, negative closes it."""
    for block in model.encoder.blocks:
        if zero_weights:
            block.gate.excite.weight.data[...] = 0.0
        block.gate.excite.bias.data[...] = value


@pytest.fixture
def write_checkpoint(tmp_path) -> Callable:
    """Save a model as ``<root>/checkpoints/epoch_0001.ckpt`` and return the path."""

    def _write(config: RunConfig, model, root: Path = None) -> Path:
        root = Path(root or tmp_path / "ckpt_run")
        path = root / "checkpoints" / "epoch_0001.ckpt"
        save_checkpoint(path, config.to_dict(), 1, model.state_dict())
        return path

    return _write


def numeric_gradient(fn: Callable, arrays: Sequence[np.ndarray], index: int, eps: float = GRAD_EPS) -> np.ndarray:
    """Central differences of ``fn`` with respect to ``arrays[index]``."""
    values = [np.array(a, dtype=np.float64) for a in arrays]
    target = values[index]
    grad = np.zeros_like(target)
    for i in np.ndindex(target.shape):
        original = target[i]
        target[i] = original + eps
        plus = fn(*[Tensor(v, dtype=np.float64) for v in values]).item()
        target[i] = original - eps
        minus = fn(*[Tensor(v, dtype=np.float64) for v in values]).item()
        target[i] = original
        grad[i] = (plus - minus) / (2 * eps)
    return grad


def assert_gradients(fn: Callable, *arrays: np.ndarray, check: Sequence[int] = None) -> None:
    """Compare analytic and finite-difference gradients of a scalar ``fn`` in float64."""
    with precision(np.float64):
        tensors = [Tensor(np.array(a, dtype=np.float64), requires_grad=True, dtype=np.float64) for a in arrays]
        fn(*tensors).backward()
        for i in (range(len(arrays)) if check is None else check):
            expected = numeric_gradient(fn, arrays, i)
            np.testing.assert_allclose(tensors[i].grad, expected, rtol=GRAD_RTOL, atol=GRAD_ATOL)


def assert_parameter_gradients(loss_fn: Callable, params, rng: np.random.Generator, per_param: int = 3) -> None:
    """Spot-check analytic gradients of model parameters against central differences.

    ``loss_fn`` rebuilds the loss from the current parameter values.
    """
    for p in params:
        p.zero_grad()
    loss_fn().backward()
    for p in params:
        assert p.grad is not None
        flat = p.data.reshape(-1)
        for j in rng.choice(flat.size, size=min(per_param, flat.size), replace=False):
            original = flat[j]
            flat[j] = original + GRAD_EPS
            plus = loss_fn().item()
            flat[j] = original - GRAD_EPS
            minus = loss_fn().item()
            flat[j] = original
            numeric = (plus - minus) / (2 * GRAD_EPS)
            analytic = p.grad.reshape(-1)[j]
            assert abs(analytic - numeric) <= GRAD_RTOL * max(abs(analytic), abs(numeric)) + GRAD_ATOL, (
                f"{p.name}: analytic {analytic} vs numeric {numeric}"
            )
