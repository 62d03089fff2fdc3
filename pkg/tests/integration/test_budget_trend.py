"""Budget tracking on a longer synthetic run."""

from pathlib import Path

import numpy as np
import pytest

from gatessl.core.trainer import Trainer
from gatessl.data import load_split
from gatessl.network.objective import build_model
from gatessl.storage.filesystem import RunDirectory
from gatessl.utils import config as config_loader

SMOKE_CONFIG = Path(__file__).resolve().parents[2] / "configs" / "smoke_synthetic.yaml"


def ratio_history(out_dir: Path, t_d: float):
    config = config_loader.load(
        SMOKE_CONFIG,
        overrides=["train.epochs=60", "train.base_lr=0.05", f"budget.t_d={t_d}", "eval.after_train=false"],
        flags={"runtime.out_dir": str(out_dir)},
        environ={},
    )
    trainer = Trainer(config, build_model(config), load_split(config, "train"), RunDirectory(out_dir))
    return [m.flop_ratio for m in trainer.fit()]


@pytest.mark.slow
def test_flop_ratio_moves_towards_budget(tmp_path):
    """Test the training FLOP ratio falls from its all-open start towards a low budget."""
    ratios = ratio_history(tmp_path / "td_0.3", 0.3)
    first, last = np.mean(ratios[:3]), np.mean(ratios[-3:])
    assert last < first - 0.1
    assert abs(last - 0.3) < abs(first - 0.3)


@pytest.mark.slow
def test_lower_budget_ends_cheaper(tmp_path):
    """Test a lower target density ends the run with a lower FLOP ratio."""
    low = ratio_history(tmp_path / "td_0.3", 0.3)
    high = ratio_history(tmp_path / "td_0.7", 0.7)
    assert np.mean(low[-3:]) < np.mean(high[-3:])
