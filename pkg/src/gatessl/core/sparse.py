"""Inference that computes only the active channels of each gated block.

Gates are evaluated first. Samples of a batch that share the same active set
in a block form one group; the group runs conv1 with the active filters only
and conv2 over the active input channels only, so the arithmetic performed is
exactly what the FLOP ledger charges. A group with every channel on executes
the same kernels on the same shapes as the dense forward.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from ..autograd import Tensor, batch_norm, conv2d, no_grad
from ..budget.ledger import dense_flops, gate_overhead
from ..data.cifar import ImageSet
from ..models.reports import BlockBudget, BudgetReport
from ..network.backbone import GatedBasicBlock, GatedResNet
from ..network.gating import gate_logits
from ..network.layers import BatchNorm, Conv2d
from ..utils.errors import EvaluationError

HISTOGRAM_BINS = 20


@dataclass
class BlockExecStats:
    """Per-sample measurements of one block."""

    name: str
    channels: int
    dense_macs: int
    active: np.ndarray
    conv_macs: np.ndarray
    overhead_macs: int
    channel_counts: np.ndarray

    @property
    def macs(self) -> np.ndarray:
        return self.conv_macs + self.overhead_macs

    def merge(self, other: "BlockExecStats") -> "BlockExecStats":
        return BlockExecStats(
            name=self.name,
            channels=self.channels,
            dense_macs=self.dense_macs,
            active=np.concatenate([self.active, other.active]),
            conv_macs=np.concatenate([self.conv_macs, other.conv_macs]),
            overhead_macs=self.overhead_macs,
            channel_counts=self.channel_counts + other.channel_counts,
        )


@dataclass
class SparseExecStats:
    """Measured MACs of every gated block for the samples seen so far."""

    blocks: List[BlockExecStats] = field(default_factory=list)
    samples: int = 0

    @property
    def total_macs(self) -> np.ndarray:
        """Per-sample MACs over gated blocks, gate overhead included."""
        if not self.blocks:
            return np.zeros(self.samples, dtype=np.int64)
        return np.sum([b.macs for b in self.blocks], axis=0)

    @property
    def total_conv_macs(self) -> np.ndarray:
        if not self.blocks:
            return np.zeros(self.samples, dtype=np.int64)
        return np.sum([b.conv_macs for b in self.blocks], axis=0)

    def merge(self, other: "SparseExecStats") -> "SparseExecStats":
        if not self.blocks:
            return other
        if not other.blocks:
            return self
        return SparseExecStats(
            blocks=[a.merge(b) for a, b in zip(self.blocks, other.blocks)],
            samples=self.samples + other.samples,
        )


def _conv(layer: Conv2d, x: np.ndarray, weight: np.ndarray) -> np.ndarray:
    return conv2d(Tensor(x, dtype=x.dtype), Tensor(weight, dtype=weight.dtype), layer.stride, layer.padding).data


def _bn_eval(layer: BatchNorm, y: np.ndarray, channels: Optional[np.ndarray] = None) -> np.ndarray:
    gamma, beta = layer.scale_shift()
    mean, var = layer.running_mean, layer.running_var
    g, b = gamma.data, beta.data
    if channels is not None:
        g, b, mean, var = g[channels], b[channels], mean[channels], var[channels]
    out = batch_norm(
        Tensor(y, dtype=y.dtype), Tensor(g, dtype=g.dtype), Tensor(b, dtype=b.dtype),
        running_mean=mean, running_var=var, training=False, eps=layer.eps,
    )
    return out.data


def _relu(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, np.zeros_like(x))


def _block_forward(block: GatedBasicBlock, x: np.ndarray) -> Tuple[np.ndarray, BlockExecStats]:
    g = block.geometry
    batch = x.shape[0]
    shortcut = x if block.projection is None else _bn_eval(block.projection_bn, _conv(block.projection, x, block.projection.weight.data))

    if block.gate is None:
        hard = np.ones((batch, g.c_out), dtype=x.dtype)
        overhead = 0
    else:
        hard = (gate_logits(Tensor(x, dtype=x.dtype), block.gate, training=False).data >= 0).astype(x.dtype)
        overhead = gate_overhead(g)

    out = np.empty((batch, g.c_out) + g.out_hw, dtype=x.dtype)
    conv_macs = np.zeros(batch, dtype=np.int64)
    patterns, inverse = np.unique(hard, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    for group, pattern in enumerate(patterns):
        members = np.flatnonzero(inverse == group)
        channels = np.flatnonzero(pattern)
        xs = x if members.size == batch else x[members]
        if channels.size == 0:
            y2 = np.zeros((members.size, g.c_out) + g.out_hw, dtype=x.dtype)
            y2 = _bn_eval(block.bn2, y2)
            macs = 0
        else:
            full = channels.size == g.c_out
            w1 = block.conv1.weight.data if full else block.conv1.weight.data[channels]
            y1 = _conv(block.conv1, xs, w1)
            y1 = _relu(_bn_eval(block.bn1, y1, None if full else channels))
            w2 = block.conv2.weight.data if full else block.conv2.weight.data[:, channels]
            y2 = _bn_eval(block.bn2, _conv(block.conv2, y1, w2))
            macs = (
                w1.shape[0] * w1.shape[1] * w1.shape[2] * w1.shape[3] * y1.shape[2] * y1.shape[3]
                + w2.shape[0] * w2.shape[1] * w2.shape[2] * w2.shape[3] * y2.shape[2] * y2.shape[3]
            )
        sc = shortcut if members.size == batch else shortcut[members]
        out[members] = _relu(y2 + sc)
        conv_macs[members] = macs

    stats = BlockExecStats(
        name=g.name,
        channels=g.c_out,
        dense_macs=dense_flops(g),
        active=hard.sum(axis=1).astype(np.int64),
        conv_macs=conv_macs,
        overhead_macs=overhead,
        channel_counts=hard.sum(axis=0).astype(np.int64),
    )
    return out, stats


def sparse_forward(encoder: GatedResNet, batch: np.ndarray) -> Tuple[np.ndarray, SparseExecStats]:
    """Eval-mode embeddings [B, d_enc] and the MACs actually performed."""
    with no_grad():
        x = encoder.stem_forward(Tensor(batch, dtype=batch.dtype), training=False).data
        blocks = []
        for block in encoder.blocks:
            x, stats = _block_forward(block, x)
            blocks.append(stats)
        embedding = x.mean(axis=(2, 3))
    return embedding, SparseExecStats(blocks=blocks, samples=batch.shape[0])


def batch_slices(n: int, batch_size: int) -> List[slice]:
    return [slice(start, min(start + batch_size, n)) for start in range(0, n, batch_size)]


def run_sparse(
    encoder: GatedResNet, image_set: ImageSet, batch_size: int, threads: int = 1
) -> Tuple[np.ndarray, SparseExecStats]:
    """Stream a split through the sparse executor; batches may run concurrently."""
    if len(image_set) == 0:
        raise EvaluationError("cannot run inference on an empty split")

    def job(part: slice) -> Tuple[np.ndarray, SparseExecStats]:
        return sparse_forward(encoder, image_set.images(part))

    parts = batch_slices(len(image_set), batch_size)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, parts))
    else:
        results = [job(p) for p in parts]

    stats = SparseExecStats()
    for _, s in results:
        stats = stats.merge(s)
    return np.concatenate([e for e, _ in results]), stats


def budget_from_stats(stats: SparseExecStats, ungated_macs: int = 0) -> BudgetReport:
    if not stats.blocks:
        raise EvaluationError("model has no blocks to measure")
    dense = int(sum(b.dense_macs for b in stats.blocks))
    overhead = int(sum(b.overhead_macs for b in stats.blocks))
    per_sample_conv = stats.total_conv_macs.astype(np.float64)
    per_sample_ratio = per_sample_conv / dense
    counts, edges = np.histogram(np.clip(per_sample_ratio, 0.0, 1.0), bins=HISTOGRAM_BINS, range=(0.0, 1.0))

    blocks = []
    for b in stats.blocks:
        conv_mean = float(b.conv_macs.mean())
        blocks.append(BlockBudget(
            name=b.name,
            channels=b.channels,
            dense_macs=b.dense_macs,
            overhead_macs=b.overhead_macs,
            active_mean=float(b.active.mean()),
            macs_mean=conv_mean + b.overhead_macs,
            ratio=conv_mean / b.dense_macs,
            ratio_with_overhead=(conv_mean + b.overhead_macs) / b.dense_macs,
        ))

    conv_mean = float(per_sample_conv.mean())
    ratio_with_overhead = (conv_mean + overhead) / dense
    return BudgetReport(
        samples=stats.samples,
        blocks=blocks,
        dense_macs=dense,
        gated_macs_mean=conv_mean,
        overhead_macs=overhead,
        ungated_macs=int(ungated_macs),
        ratio=conv_mean / dense,
        overhead_ratio=overhead / dense,
        ratio_with_overhead=ratio_with_overhead,
        flops_reduction=1.0 - ratio_with_overhead,
        histogram=[int(c) for c in counts],
        histogram_edges=[float(e) for e in edges],
    )


def measure_budget(encoder: GatedResNet, image_set: ImageSet, batch_size: int = 256, threads: int = 1) -> BudgetReport:
    """Mean measured MACs over a split relative to the dense gated blocks."""
    _, stats = run_sparse(encoder, image_set, batch_size, threads)
    return budget_from_stats(stats, encoder.ungated_flops())
