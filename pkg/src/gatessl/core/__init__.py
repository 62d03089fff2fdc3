from .evaluation import ChannelUsage, EmbeddingSet, channel_usage, emit_reports, extract_embeddings, knn_accuracy
from .optimizer import SGD
from .pipeline import count_flops, evaluate_checkpoint, evaluate_model, infer_stats, restore_model, sweep, train_run
from .schedule import lr_at, tau_at
from .sparse import SparseExecStats, measure_budget, run_sparse, sparse_forward
from .trainer import Trainer, train_step

__all__ = [
    "ChannelUsage",
    "EmbeddingSet",
    "SGD",
    "SparseExecStats",
    "Trainer",
    "channel_usage",
    "count_flops",
    "emit_reports",
    "evaluate_checkpoint",
    "evaluate_model",
    "extract_embeddings",
    "infer_stats",
    "knn_accuracy",
    "lr_at",
    "measure_budget",
    "restore_model",
    "run_sparse",
    "sparse_forward",
    "sweep",
    "tau_at",
    "train_run",
    "train_step",
]
