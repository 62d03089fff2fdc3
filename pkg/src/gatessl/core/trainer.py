"""Joint optimisation of the self-supervised loss and the FLOP budget."""

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from ..autograd import Tensor
from ..budget.ledger import flop_report, ratio_from_active, total_gating_loss
from ..data.augment import TwoViewAugmenter
from ..data.cifar import ImageSet
from ..models.config import RunConfig
from ..network.objective import SimSiamModel, simsiam_loss
from ..storage.checkpoint import load_checkpoint, save_checkpoint
from ..storage.filesystem import GATE_STATS_FILE, METRICS_FILE, RunDirectory
from ..storage.index import CheckpointIndex
from ..utils.errors import ArtifactMismatchError, CheckpointError, ConfigurationError, NumericFaultError
from ..utils.logger import Logger
from .optimizer import SGD
from .schedule import lr_for, tau_at

GUMBEL_STREAM = 7


@dataclass
class StepMetrics:
    loss_ssl: float
    loss_gate: float
    loss: float
    flop_ratio: float
    lr: float
    active: List[float] = field(default_factory=list)


@dataclass
class EpochMetrics:
    epoch: int
    loss_ssl: float
    loss_gate: float
    flop_ratio: float
    lr: float
    tau: float
    active: List[float] = field(default_factory=list)

    def row(self) -> Dict[str, float]:
        return {
            "epoch": self.epoch,
            "loss_ssl": self.loss_ssl,
            "loss_gate": self.loss_gate,
            "flop_ratio": self.flop_ratio,
            "lr": self.lr,
            "tau": self.tau,
        }


def train_step(
    model: SimSiamModel,
    optimizer: SGD,
    x1: np.ndarray,
    x2: np.ndarray,
    config: RunConfig,
    rng: np.random.Generator,
    tau: float,
    lr: float,
    progress: float,
) -> StepMetrics:
    """One SGD step on L = L_SSL + L_G for an augmented view pair."""
    optimizer.zero_grad()
    out = model.forward_views(Tensor(x1, dtype=x1.dtype), Tensor(x2, dtype=x2.dtype), "train", rng, tau)
    loss_ssl = simsiam_loss(out.p1, out.p2, out.z1, out.z2)

    if model.encoder.gated:
        report = flop_report(model.geometries, [out.states1, out.states2])
        loss_gate = total_gating_loss(report, progress, config.budget)
        loss = loss_ssl + loss_gate
        ratio = report.ratio.item()
        active = [
            0.5 * (float(s1.active.mean()) + float(s2.active.mean()))
            for s1, s2 in zip(out.states1, out.states2)
        ]
        gate_value = loss_gate.item()
    else:
        loss, ratio, active, gate_value = loss_ssl, 1.0, [], 0.0

    value = loss.item()
    if not np.isfinite(value):
        raise NumericFaultError(f"non-finite loss {value} (ssl={loss_ssl.item()}, gate={gate_value})")
    loss.backward()
    optimizer.step(lr)
    return StepMetrics(
        loss_ssl=loss_ssl.item(), loss_gate=gate_value, loss=value, flop_ratio=ratio, lr=lr, active=active
    )


class Trainer:
    """Runs epochs, writes metrics and gate statistics, checkpoints and resumes."""

    def __init__(self, config: RunConfig, model: SimSiamModel, train_set: ImageSet, run_dir: RunDirectory):
        self.config = config
        self.model = model
        self.train_set = train_set
        self.run_dir = run_dir
        self.index = CheckpointIndex(run_dir)
        self.optimizer = SGD(list(model.named_parameters()), config.train.momentum, config.train.weight_decay)
        self.augmenter = TwoViewAugmenter(config.augment, config.augment_seed, config.runtime.threads)
        self.steps_per_epoch = len(train_set) // config.train.batch_size
        if self.steps_per_epoch == 0:
            raise ConfigurationError(
                f"{len(train_set)} training images do not fill one batch of {config.train.batch_size}",
                field="train.batch_size",
            )
        self.history: List[EpochMetrics] = []

    @property
    def total_steps(self) -> int:
        return self.steps_per_epoch * self.config.train.epochs

    def run_epoch(self, epoch: int) -> EpochMetrics:
        """Train epoch ``epoch`` (0-based); the returned record is numbered from 1."""
        cfg = self.config.train
        seed = cfg.seed
        tau = tau_at(epoch, cfg)
        order = np.random.default_rng([seed, epoch]).permutation(len(self.train_set))
        gated = self.model.encoder.gated

        ssl, gate, lr = [], [], 0.0
        active_sum = np.zeros(len(self.model.geometries) if gated else 0)
        for step in range(self.steps_per_epoch):
            indices = order[step * cfg.batch_size:(step + 1) * cfg.batch_size]
            global_step = epoch * self.steps_per_epoch + step
            lr = lr_for(global_step, self.steps_per_epoch, cfg)
            x1, x2 = self.augmenter(self.train_set.images(indices), indices, epoch)
            metrics = train_step(
                self.model, self.optimizer, x1, x2, self.config,
                np.random.default_rng([seed, epoch, step, GUMBEL_STREAM]),
                tau, lr, global_step / self.total_steps,
            )
            ssl.append(metrics.loss_ssl)
            gate.append(metrics.loss_gate)
            if gated:
                active_sum += np.asarray(metrics.active)
            Logger.debug(
                f"epoch {epoch + 1} step {step + 1}/{self.steps_per_epoch} "
                f"loss={metrics.loss:.4f} ssl={metrics.loss_ssl:.4f} gate={metrics.loss_gate:.4f} "
                f"ratio={metrics.flop_ratio:.3f} lr={lr:.5f}"
            )

        active = (active_sum / self.steps_per_epoch).tolist()
        ratio = ratio_from_active(self.model.geometries, active) if gated else 1.0
        return EpochMetrics(
            epoch=epoch + 1,
            loss_ssl=float(np.mean(ssl)),
            loss_gate=float(np.mean(gate)),
            flop_ratio=ratio,
            lr=lr,
            tau=tau,
            active=active,
        )

    def save(self, epoch: int, metrics: Optional[EpochMetrics] = None) -> str:
        arrays = self.model.state_dict()
        arrays.update(self.optimizer.state_dict())
        path = self.run_dir.checkpoint_path(epoch)
        save_checkpoint(
            path,
            self.config.to_dict(),
            epoch,
            arrays,
            metadata={"steps_per_epoch": self.steps_per_epoch, "train_size": len(self.train_set)},
        )
        relative = str(path.relative_to(self.run_dir.root))
        self.index.add(epoch, relative, metrics.row() if metrics else None)
        Logger.info(f"Saved checkpoint {relative}")
        return relative

    def resume(self) -> int:
        """Restore the newest indexed checkpoint; returns the number of completed epochs."""
        latest = self.index.latest()
        if latest is None:
            Logger.info("No checkpoint to resume from; starting fresh")
            return 0
        checkpoint = load_checkpoint(self.run_dir.get_path(latest["file"]))
        saved = RunConfig.from_dict(checkpoint.config)
        if saved.backbone != self.config.backbone or saved.heads != self.config.heads:
            raise ArtifactMismatchError(f"{latest['file']} was trained with a different architecture")
        self.model.load_state_dict(checkpoint.arrays)
        self.optimizer.load_state_dict(checkpoint.arrays)
        self.run_dir.truncate_after(checkpoint.epoch)
        Logger.info(f"Resumed from {latest['file']} after epoch {checkpoint.epoch}")
        return checkpoint.epoch

    def fit(self, resume: bool = False) -> List[EpochMetrics]:
        cfg = self.config.train
        start = self.resume() if resume else 0
        if start == 0:
            self.run_dir.delete(METRICS_FILE)
            self.run_dir.delete(GATE_STATS_FILE)
        if start >= cfg.epochs:
            Logger.info(f"Run already finished {start} epochs")
            return self.history

        Logger.info(
            f"Training {cfg.epochs - start} epochs x {self.steps_per_epoch} steps "
            f"({len(self.train_set)} images, batch {cfg.batch_size}, t_d={self.config.budget.t_d})"
        )
        for epoch in range(start, cfg.epochs):
            metrics = self.run_epoch(epoch)
            self.history.append(metrics)
            if self.model.encoder.gated:
                self.run_dir.append_gate_stats({
                    "epoch": metrics.epoch,
                    "blocks": [g.name for g in self.model.geometries],
                    "active_mean": metrics.active,
                })
            self.run_dir.append_metrics(metrics.row())
            Logger.info(
                f"epoch {metrics.epoch}/{cfg.epochs} loss_ssl={metrics.loss_ssl:.4f} "
                f"loss_gate={metrics.loss_gate:.4f} flop_ratio={metrics.flop_ratio:.3f} "
                f"lr={metrics.lr:.5f} tau={metrics.tau:.3f}"
            )
            if metrics.epoch % cfg.checkpoint_every == 0 or metrics.epoch == cfg.epochs:
                try:
                    self.save(metrics.epoch, metrics)
                except OSError as e:
                    raise CheckpointError(f"cannot write checkpoint for epoch {metrics.epoch}: {e}")
        return self.history
