"""KNN evaluation of encoder features and channel activation analysis."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from ..autograd import Tensor, l2_normalize, no_grad
from ..data.cifar import ImageSet
from ..models.reports import BlockUsage, BudgetReport, RunSummary
from ..network.backbone import GatedResNet
from ..storage.filesystem import RunDirectory
from ..utils.errors import EvaluationError
from ..utils.logger import Logger
from .sparse import SparseExecStats, batch_slices, run_sparse

NORM_TOLERANCE = 1e-5
SIMILARITY_CHUNK = 512

CHANNEL_USAGE_FILE = "channel_usage.csv"
SUMMARY_FILE = "summary.json"


@dataclass
class EmbeddingSet:
    """L2-normalised encoder features with their labels."""

    features: np.ndarray
    labels: np.ndarray
    split: str = "val"

    def __post_init__(self) -> None:
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise EvaluationError(f"embedding set {self.split!r} is empty or not 2-D: {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise EvaluationError(f"{self.features.shape[0]} features but labels of shape {self.labels.shape}")
        norms = np.sqrt((self.features.astype(np.float64) ** 2).sum(axis=1))
        if np.any(np.abs(norms - 1.0) > NORM_TOLERANCE):
            raise EvaluationError(f"embedding set {self.split!r} has rows that are not unit-norm")

    def __len__(self) -> int:
        return int(self.features.shape[0])


def extract_embeddings(
    encoder: GatedResNet, image_set: ImageSet, batch_size: int = 256, threads: int = 1, split: str = "val"
) -> EmbeddingSet:
    """Eval-mode pooled encoder features, normalised to unit length."""
    if len(image_set) == 0:
        raise EvaluationError(f"split {split!r} is empty")

    def job(part: slice) -> np.ndarray:
        with no_grad():
            batch = image_set.images(part)
            embedding, _ = encoder.encode(Tensor(batch, dtype=batch.dtype), "eval")
            return l2_normalize(embedding).data

    parts = batch_slices(len(image_set), batch_size)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(job, parts))
    else:
        chunks = [job(p) for p in parts]
    return EmbeddingSet(np.concatenate(chunks), image_set.labels.astype(np.int64), split)


def knn_predict(train: EmbeddingSet, val: EmbeddingSet, k: int = 1, temperature: float = 0.07) -> np.ndarray:
    """Predicted labels for every validation row.

    k=1 takes the label of the most similar train row (lowest index on ties).
    k>1 sums exp(similarity / temperature) per class over the k most similar
    rows and picks the heaviest class (lowest label on ties).
    """
    if len(train) == 0 or len(val) == 0:
        raise EvaluationError("KNN needs non-empty train and val sets")
    if not 1 <= k <= len(train):
        raise EvaluationError(f"k={k} must lie in [1, {len(train)}]")
    if train.features.shape[1] != val.features.shape[1]:
        raise EvaluationError(
            f"feature widths differ: train {train.features.shape[1]}, val {val.features.shape[1]}"
        )
    num_classes = int(max(train.labels.max(), val.labels.max())) + 1
    predictions = np.empty(len(val), dtype=np.int64)
    for start in range(0, len(val), SIMILARITY_CHUNK):
        stop = min(start + SIMILARITY_CHUNK, len(val))
        sims = val.features[start:stop] @ train.features.T
        if k == 1:
            predictions[start:stop] = train.labels[np.argmax(sims, axis=1)]
            continue
        order = np.argsort(-sims, axis=1, kind="stable")[:, :k]
        top = np.take_along_axis(sims, order, axis=1).astype(np.float64)
        weights = np.exp(top / temperature)
        votes = np.zeros((stop - start, num_classes))
        rows = np.repeat(np.arange(stop - start), k)
        np.add.at(votes, (rows, train.labels[order].reshape(-1)), weights.reshape(-1))
        predictions[start:stop] = np.argmax(votes, axis=1)
    return predictions


def knn_accuracy(train: EmbeddingSet, val: EmbeddingSet, k: int = 1, temperature: float = 0.07) -> float:
    predictions = knn_predict(train, val, k, temperature)
    return float(np.mean(predictions == val.labels))


@dataclass
class BlockChannelUsage:
    name: str
    counts: np.ndarray
    samples: int

    @property
    def frequency(self) -> np.ndarray:
        return self.counts / self.samples

    @property
    def categories(self) -> List[str]:
        return [
            "always_off" if c == 0 else "always_on" if c == self.samples else "dynamic"
            for c in self.counts
        ]

    def summary(self) -> BlockUsage:
        off = int((self.counts == 0).sum())
        on = int((self.counts == self.samples).sum())
        return BlockUsage(
            name=self.name,
            channels=int(self.counts.size),
            always_off=off,
            always_on=on,
            dynamic=int(self.counts.size) - off - on,
        )


@dataclass
class ChannelUsage:
    """How often each gated channel is on over a split; categories are exact."""

    blocks: List[BlockChannelUsage]
    samples: int

    @classmethod
    def from_stats(cls, stats: SparseExecStats, gated_names: Optional[List[str]] = None) -> "ChannelUsage":
        blocks = [
            BlockChannelUsage(b.name, b.channel_counts.copy(), stats.samples)
            for b in stats.blocks
            if b.overhead_macs > 0 and (gated_names is None or b.name in gated_names)
        ]
        if not blocks:
            raise EvaluationError("model has no gated blocks to analyse")
        return cls(blocks=blocks, samples=stats.samples)

    def counts(self) -> Dict[str, BlockUsage]:
        return {b.name: b.summary() for b in self.blocks}


def channel_usage(encoder: GatedResNet, image_set: ImageSet, batch_size: int = 256, threads: int = 1) -> ChannelUsage:
    _, stats = run_sparse(encoder, image_set, batch_size, threads)
    return ChannelUsage.from_stats(stats)


def emit_reports(
    usage: Optional[ChannelUsage],
    budget: BudgetReport,
    knn_acc: Optional[float],
    out_dir: Path,
    t_d: Optional[float] = None,
    k: int = 1,
    extra: Optional[Dict] = None,
) -> RunSummary:
    """Write channel_usage.csv and summary.json; returns the summary."""
    run_dir = RunDirectory(out_dir)
    run_dir.ensure_dir()
    if usage is not None:
        rows = []
        for block in usage.blocks:
            for channel, (freq, category) in enumerate(zip(block.frequency, block.categories)):
                rows.append([block.name, channel, repr(float(freq)), category])
        run_dir.save_csv(["block", "channel", "frequency", "category"], rows, CHANNEL_USAGE_FILE)

    summary = RunSummary(
        t_d=t_d,
        gated=usage is not None,
        knn_acc=knn_acc,
        k=k,
        flop_ratio=budget.ratio_with_overhead,
        conv_ratio=budget.ratio,
        flops_reduction=budget.flops_reduction,
        gated_macs=budget.gated_macs_mean,
        blocks=[b.summary() for b in usage.blocks] if usage is not None else [],
        **(extra or {}),
    )
    run_dir.save_json(summary.to_dict(), SUMMARY_FILE)
    Logger.info(f"Wrote {SUMMARY_FILE} to {run_dir.root}")
    return summary
