"""Checkpoint-driven workflows shared by the CLI and the post-training summary."""

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from ..autograd import Tensor, no_grad
from ..budget.ledger import dense_flops, gate_overhead, hard_flops
from ..data import load_split
from ..data.cifar import ImageSet
from ..models.config import RunConfig
from ..models.reports import BudgetReport, FlopCount, FlopCountBlock, KnnResult, RunSummary, TradeoffRow
from ..network.objective import SimSiamModel, build_model
from ..storage.checkpoint import Checkpoint
from ..storage.filesystem import RESOLVED_CONFIG_FILE, RunDirectory
from ..utils import config as config_loader
from ..utils.errors import ArtifactMismatchError, EvaluationError
from ..utils.logger import Logger
from .evaluation import ChannelUsage, emit_reports, extract_embeddings, knn_accuracy
from .sparse import batch_slices, budget_from_stats, run_sparse
from .trainer import Trainer

TRADEOFF_FILE = "tradeoff.csv"
TRADEOFF_HEADER = ["t_d", "knn_acc", "flop_ratio", "gated_macs", "flops_reduction"]


@dataclass
class Evaluation:
    summary: RunSummary
    budget: BudgetReport
    usage: Optional[ChannelUsage] = None
    knn: Optional[KnnResult] = None


def checkpoint_config(checkpoint: Checkpoint) -> RunConfig:
    """The configuration a checkpoint was trained with."""
    try:
        return RunConfig.from_dict(checkpoint.config)
    except ValidationError as e:
        raise ArtifactMismatchError(f"checkpoint header holds an unreadable configuration: {e}")


def restore_model(checkpoint: Checkpoint, config: Optional[RunConfig] = None) -> SimSiamModel:
    """Rebuild the model described by ``config`` and load the checkpoint weights into it."""
    saved = checkpoint_config(checkpoint)
    config = config or saved
    if saved.backbone != config.backbone or saved.heads != config.heads:
        raise ArtifactMismatchError("checkpoint architecture differs from the configured backbone/heads")
    model = build_model(config)
    model.load_state_dict(checkpoint.arrays)
    return model


def evaluate_model(
    model: SimSiamModel,
    config: RunConfig,
    train_set: Optional[ImageSet],
    val_set: ImageSet,
    out_dir: Path,
    extra: Optional[Dict[str, Any]] = None,
) -> Evaluation:
    """Extract, KNN, measure budget, channel usage, then write the report files.

    KNN is skipped when ``train_set`` is None.
    """
    encoder = model.encoder
    threads = config.runtime.threads
    batch_size = config.eval.batch_size

    knn: Optional[KnnResult] = None
    if train_set is not None:
        train_emb = extract_embeddings(encoder, train_set, batch_size, threads, "train")
        val_emb = extract_embeddings(encoder, val_set, batch_size, threads, "val")
        accuracy = knn_accuracy(train_emb, val_emb, config.eval.k, config.eval.temperature)
        knn = KnnResult(
            k=config.eval.k,
            temperature=config.eval.temperature,
            accuracy=accuracy,
            train_size=len(train_emb),
            val_size=len(val_emb),
        )

    _, stats = run_sparse(encoder, val_set, batch_size, threads)
    budget = budget_from_stats(stats, encoder.ungated_flops())
    usage = ChannelUsage.from_stats(stats) if encoder.gated else None
    summary = emit_reports(
        usage,
        budget,
        knn.accuracy if knn else None,
        Path(out_dir),
        t_d=config.budget.t_d if encoder.gated else None,
        k=config.eval.k,
        extra=extra,
    )
    return Evaluation(summary=summary, budget=budget, usage=usage, knn=knn)


def evaluate_checkpoint(
    checkpoint: Checkpoint,
    config: RunConfig,
    out_dir: Path,
    knn: bool = True,
    split: str = "val",
    source: Optional[str] = None,
) -> Evaluation:
    """KNN (optional), budget and channel usage of a loaded checkpoint on ``split``."""
    model = restore_model(checkpoint, config)
    train_set = load_split(config, "train") if knn else None
    val_set = load_split(config, split)
    return evaluate_model(
        model,
        config,
        train_set,
        val_set,
        out_dir,
        extra={"checkpoint": source, "epoch": checkpoint.epoch, "split": split},
    )


def count_flops(model: SimSiamModel, image_set: ImageSet, batch_size: int = 256) -> FlopCount:
    """Ledger counts from eval-mode hard masks, averaged over a split."""
    if len(image_set) == 0:
        raise EvaluationError("cannot count FLOPs on an empty split")
    encoder = model.encoder
    geometries = model.geometries
    totals = np.zeros(len(geometries), dtype=np.int64)

    if encoder.gated:
        with no_grad():
            for part in batch_slices(len(image_set), batch_size):
                batch = image_set.images(part)
                _, states = encoder.encode(Tensor(batch, dtype=batch.dtype), "eval")
                for i, (state, g) in enumerate(zip(states, geometries)):
                    totals[i] += int(hard_flops(state.hard, g).sum())
        overhead = int(sum(gate_overhead(g) for g in geometries))
    else:
        totals = np.array([dense_flops(g) * len(image_set) for g in geometries], dtype=np.int64)
        overhead = 0

    blocks = []
    for g, total in zip(geometries, totals):
        mean_flops = float(total) / len(image_set)
        blocks.append(FlopCountBlock(name=g.name, F_dense=dense_flops(g), F_dynamic_mean=mean_flops,
                                     ratio=mean_flops / dense_flops(g)))
    dense = int(sum(b.F_dense for b in blocks))
    dynamic = float(totals.sum()) / len(image_set)
    return FlopCount(
        blocks=blocks,
        F_dense=dense,
        F_dynamic_mean=dynamic,
        ratio=dynamic / dense,
        gate_overhead=overhead,
        ungated_flops=encoder.ungated_flops() + model.head_flops(),
        samples=len(image_set),
    )


def infer_stats(model: SimSiamModel, image_set: ImageSet, batch_size: int = 256, threads: int = 1) -> Dict[str, Any]:
    """Per-block sparse execution statistics keyed by block name."""
    _, stats = run_sparse(model.encoder, image_set, batch_size, threads)
    budget = budget_from_stats(stats, model.encoder.ungated_flops())
    return {
        "samples": budget.samples,
        "blocks": {
            b.name: {"active_mean": b.active_mean, "macs_mean": b.macs_mean, "ratio": b.ratio_with_overhead}
            for b in budget.blocks
        },
        "ratio": budget.ratio_with_overhead,
        "conv_ratio": budget.ratio,
        "flops_reduction": budget.flops_reduction,
        "histogram": budget.histogram,
    }


def train_run(
    config: RunConfig, resume: bool = False, evaluate: Optional[bool] = None
) -> Tuple[Trainer, Optional[Evaluation]]:
    """Train into ``config.runtime.out_dir`` and optionally summarise the final model."""
    run_dir = RunDirectory(config.runtime.out_dir)
    run_dir.ensure_dir()
    config_loader.save(config, run_dir.get_path(RESOLVED_CONFIG_FILE))

    Logger.add_file_handler(run_dir.log_path)
    try:
        train_set = load_split(config, "train")
        model = build_model(config)
        Logger.info(f"Model has {model.num_parameters():,} parameters ({len(model.geometries)} blocks)")
        trainer = Trainer(config, model, train_set, run_dir)
        trainer.fit(resume=resume)
    finally:
        Logger.remove_file_handlers()

    if not (config.eval.after_train if evaluate is None else evaluate):
        return trainer, None
    latest = trainer.index.latest()
    evaluation = evaluate_model(
        model,
        config,
        train_set,
        load_split(config, "val"),
        run_dir.root,
        extra={"checkpoint": latest["file"] if latest else None, "epoch": config.train.epochs},
    )
    return trainer, evaluation


def budget_label(t_d: Optional[float]) -> str:
    return "baseline" if t_d is None else f"td_{t_d:g}"


def sweep(config: RunConfig, budgets: Sequence[float], baseline: bool = False) -> List[TradeoffRow]:
    """Train one run per target density (and the ungated baseline) and tabulate the trade-off."""
    root = RunDirectory(config.runtime.out_dir)
    root.ensure_dir()
    targets: List[Optional[float]] = ([None] if baseline else []) + list(budgets)

    rows: List[TradeoffRow] = []
    for t_d in targets:
        data = config.to_dict()
        data["runtime"]["out_dir"] = str(root.get_path(budget_label(t_d)))
        data["eval"]["after_train"] = True
        if t_d is None:
            data["backbone"]["gated"] = False
        else:
            data["budget"]["t_d"] = t_d
        run_config = config_loader.validate(data)

        Logger.info(f"Sweep run {budget_label(t_d)} -> {run_config.runtime.out_dir}")
        _, evaluation = train_run(run_config, evaluate=True)
        summary = evaluation.summary
        rows.append(TradeoffRow(
            t_d=t_d,
            knn_acc=summary.knn_acc,
            flop_ratio=summary.flop_ratio,
            gated_macs=summary.gated_macs,
            flops_reduction=summary.flops_reduction,
        ))
        root.save_csv(TRADEOFF_HEADER, [r.as_row() for r in rows], TRADEOFF_FILE)
    Logger.info(f"Wrote {TRADEOFF_FILE} with {len(rows)} rows")
    return rows
