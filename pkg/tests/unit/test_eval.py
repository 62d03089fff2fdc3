"""Unit tests for evaluation module."""

import json

import numpy as np
import pytest

from gatessl.core.evaluation import (
    CHANNEL_USAGE_FILE,
    SUMMARY_FILE,
    ChannelUsage,
    EmbeddingSet,
    channel_usage,
    emit_reports,
    extract_embeddings,
    knn_accuracy,
    knn_predict,
)
from gatessl.core.sparse import budget_from_stats, run_sparse
from gatessl.data import make_synthetic_set
from gatessl.network.objective import build_model
from gatessl.utils.errors import EvaluationError

from ..conftest import set_gate_bias


def unit_rows(array):
    array = np.asarray(array, dtype=np.float64)
    return array / np.linalg.norm(array, axis=1, keepdims=True)


def embedding_set(features, labels, split="val"):
    return EmbeddingSet(unit_rows(features), np.asarray(labels, dtype=np.int64), split)


def brute_force_knn(train, val):
    predictions = []
    for row in val.features:
        best, label = -np.inf, -1
        for feature, target in zip(train.features, train.labels):
            sim = float(row @ feature)
            if sim > best:
                best, label = sim, int(target)
        predictions.append(label)
    return np.array(predictions)


def test_embedding_set_validation():
    """Test rows must be unit-norm and labels must match the row count."""
    with pytest.raises(EvaluationError):
        EmbeddingSet(np.array([[1.0, 1.0]]), np.array([0]))
    with pytest.raises(EvaluationError):
        EmbeddingSet(unit_rows([[1.0, 0.0]]), np.array([0, 1]))


def test_knn_nearest_neighbour():
    """Test a query takes the label of its most similar train row."""
    train = embedding_set([[1.0, 0.0], [0.0, 1.0]], [0, 1], "train")
    val = embedding_set([[0.9, 0.1], [0.2, 0.8]], [0, 1])
    assert knn_predict(train, val).tolist() == [0, 1]
    assert knn_accuracy(train, val) == 1.0


def test_knn_on_train_set_is_perfect():
    """Test evaluating the train set against itself is fully correct for distinct rows."""
    rng = np.random.default_rng(0)
    train = embedding_set(rng.normal(size=(30, 6)), rng.integers(0, 4, size=30), "train")
    assert knn_accuracy(train, train) == 1.0


def test_knn_tie_takes_lowest_index():
    """Test identical train rows resolve to the first one."""
    train = embedding_set([[1.0, 0.0], [1.0, 0.0]], [1, 0], "train")
    val = embedding_set([[1.0, 0.0]], [1])
    assert knn_predict(train, val).tolist() == [1]


def test_knn_matches_brute_force():
    """Test vectorised prediction against a direct loop."""
    rng = np.random.default_rng(1)
    train = embedding_set(rng.normal(size=(200, 16)), rng.integers(0, 10, size=200), "train")
    val = embedding_set(rng.normal(size=(50, 16)), rng.integers(0, 10, size=50))
    np.testing.assert_array_equal(knn_predict(train, val), brute_force_knn(train, val))


def test_knn_rotation_invariant():
    """Test a shared orthogonal rotation leaves predictions unchanged."""
    rng = np.random.default_rng(2)
    q, _ = np.linalg.qr(rng.normal(size=(16, 16)))
    train_x, val_x = unit_rows(rng.normal(size=(100, 16))), unit_rows(rng.normal(size=(40, 16)))
    train_y, val_y = rng.integers(0, 5, size=100), rng.integers(0, 5, size=40)
    plain = knn_predict(EmbeddingSet(train_x, train_y), EmbeddingSet(val_x, val_y))
    rotated = knn_predict(EmbeddingSet(train_x @ q, train_y), EmbeddingSet(val_x @ q, val_y))
    np.testing.assert_array_equal(plain, rotated)


def test_knn_weighted_vote():
    """Test k > 1 lets two close neighbours outvote the single closest one."""
    train = embedding_set([[1.0, 0.0], [0.95, 0.3], [0.95, -0.3]], [0, 1, 1], "train")
    val = embedding_set([[1.0, 0.0]], [1])
    assert knn_predict(train, val, k=1).tolist() == [0]
    assert knn_predict(train, val, k=3, temperature=1.0).tolist() == [1]


def test_knn_invalid_k():
    """Test k must lie between one and the train set size."""
    train = embedding_set([[1.0, 0.0]], [0], "train")
    with pytest.raises(EvaluationError):
        knn_predict(train, train, k=2)


def test_extract_embeddings(tiny_model):
    """Test features are unit-norm, labelled and independent of batching."""
    image_set = make_synthetic_set(3, 4, 8, seed=1)
    a = extract_embeddings(tiny_model.encoder, image_set, batch_size=5)
    b = extract_embeddings(tiny_model.encoder, image_set, batch_size=12, threads=2)
    assert len(a) == 12
    np.testing.assert_allclose(a.features, b.features, rtol=1e-5, atol=1e-6)
    np.testing.assert_array_equal(a.labels, image_set.labels)


def test_channel_usage_categories(tiny_model):
    """Test forced gates land in the always-on and always-off categories."""
    image_set = make_synthetic_set(3, 2, 8, seed=2)
    set_gate_bias(tiny_model, 5.0)
    usage = channel_usage(tiny_model.encoder, image_set, batch_size=4)
    assert all(u.always_on == u.channels and u.dynamic == 0 for u in usage.counts().values())

    set_gate_bias(tiny_model, -5.0)
    usage = channel_usage(tiny_model.encoder, image_set, batch_size=4)
    counts = usage.counts()
    assert sorted(counts) == ["stage1.block0", "stage2.block0"]
    assert all(u.always_off == u.channels for u in counts.values())


def test_channel_usage_partition(tiny_model):
    """Test the three categories partition every block's channels."""
    image_set = make_synthetic_set(3, 3, 8, seed=3)
    usage = channel_usage(tiny_model.encoder, image_set, batch_size=4)
    for u in usage.counts().values():
        assert u.always_off + u.always_on + u.dynamic == u.channels
    for block in usage.blocks:
        assert np.all((block.frequency >= 0) & (block.frequency <= 1))


def test_channel_usage_needs_gates(ungated_config):
    """Test an ungated model has nothing to analyse."""
    model = build_model(ungated_config)
    _, stats = run_sparse(model.encoder, make_synthetic_set(2, 2, 8, seed=0), batch_size=4)
    with pytest.raises(EvaluationError):
        ChannelUsage.from_stats(stats)


def test_emit_reports(tiny_model, tmp_path):
    """Test the usage table has one row per channel and reruns are byte-identical."""
    image_set = make_synthetic_set(3, 3, 8, seed=4)
    _, stats = run_sparse(tiny_model.encoder, image_set, batch_size=4)
    usage = ChannelUsage.from_stats(stats)
    budget = budget_from_stats(stats, tiny_model.encoder.ungated_flops())

    summary = emit_reports(usage, budget, 0.5, tmp_path, t_d=0.3, k=1)
    lines = (tmp_path / CHANNEL_USAGE_FILE).read_text().splitlines()
    assert lines[0] == "block,channel,frequency,category"
    assert len(lines) == 1 + 4 + 8
    data = json.loads((tmp_path / SUMMARY_FILE).read_text())
    assert data["t_d"] == 0.3 and data["knn_acc"] == 0.5
    assert data["flop_ratio"] == pytest.approx(budget.ratio_with_overhead)
    assert summary.gated

    first = [(tmp_path / name).read_bytes() for name in (CHANNEL_USAGE_FILE, SUMMARY_FILE)]
    emit_reports(usage, budget, 0.5, tmp_path, t_d=0.3, k=1)
    assert [(tmp_path / name).read_bytes() for name in (CHANNEL_USAGE_FILE, SUMMARY_FILE)] == first
