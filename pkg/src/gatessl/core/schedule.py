"""Learning-rate and temperature schedules."""

import math

from ..models.config import TrainConfig
from ..utils.errors import ConfigurationError


def lr_at(step: int, total_steps: int, base_lr: float, warmup_steps: int) -> float:
    """Linear warmup to ``base_lr`` then cosine decay; the last step reaches 0."""
    if not 0 <= step < total_steps:
        raise ConfigurationError(f"step {step} outside [0, {total_steps})", field="step")
    if warmup_steps >= total_steps:
        raise ConfigurationError(
            f"warmup ({warmup_steps} steps) must be shorter than training ({total_steps} steps)",
            field="train.warmup_epochs",
        )
    if step < warmup_steps:
        return base_lr * (step + 1) / warmup_steps
    progress = (step + 1 - warmup_steps) / (total_steps - warmup_steps)
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def lr_for(step: int, steps_per_epoch: int, cfg: TrainConfig) -> float:
    return lr_at(step, steps_per_epoch * cfg.epochs, cfg.base_lr, steps_per_epoch * cfg.warmup_epochs)


def tau_at(epoch: int, cfg: TrainConfig) -> float:
    """Exponential anneal from tau_start to tau_end, held fixed within an epoch."""
    if cfg.epochs <= 1:
        return cfg.tau_start
    frac = min(max(epoch / (cfg.epochs - 1), 0.0), 1.0)
    return cfg.tau_start * (cfg.tau_end / cfg.tau_start) ** frac
