"""
gatessl - budgeted channel gating for self-supervised learning
~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~

Trains a small gated ResNet with a SimSiam objective while a FLOP budget
decides how many channels each input may use, then runs the encoder with
only the selected channels.

Basic usage:
    >>> from gatessl import build_model, train_run
    >>> from gatessl.utils import config
    >>> cfg = config.load("configs/smoke_synthetic.yaml")
    >>> trainer, evaluation = train_run(cfg)
    >>> evaluation.summary.flop_ratio

:license: MIT, see LICENSE for more details.
"""

__version__ = "0.1.0"

from .core.pipeline import evaluate_checkpoint, train_run
from .models.config import RunConfig
from .network.objective import SimSiamModel, build_model

__all__ = [
    "RunConfig",
    "SimSiamModel",
    "build_model",
    "evaluate_checkpoint",
    "train_run",
]
