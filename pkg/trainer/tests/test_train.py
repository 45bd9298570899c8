import json

import numpy as np
import pytest
import torch

from opre_trainer.cli import main
from opre_trainer.train import TrainConfig, TrainingDiverged, train_and_eval

from test_data import write_export_file

torch.set_num_threads(2)


def make_separable_set(path, n, seed):
    """Two trivially separable classes: dark noise vs bright noise."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, n)
    pixels = rng.normal(0.0, 0.03, (n, 3, 32, 32)).astype(np.float32)
    pixels += labels[:, None, None, None].astype(np.float32) * 0.9 + 0.05
    pixels = np.clip(pixels, 0.0, 1.0)
    write_export_file(path, labels.tolist(), pixels)
    return labels


def test_train_and_eval_separable(tmp_path):
    train = tmp_path / "train.oprx"
    test = tmp_path / "test.oprx"
    make_separable_set(train, 48, seed=0)
    make_separable_set(test, 32, seed=1)
    # enough small-batch steps for the batch-norm running stats to settle
    config = TrainConfig(
        train_export=str(train),
        test_path=str(test),
        test_kind="oprx",
        epochs=8,
        batch_size=8,
        seed=7,
    )
    report = train_and_eval(config)
    assert report["accuracy"] >= 0.9
    assert report["n_train"] == 48
    assert report["n_test"] == 32
    assert report["seed"] == 7
    assert report["model_parameter_bytes"] == 4 * 10_187_394  # num_classes=2
    assert np.isfinite(report["final_loss"])


def test_divergence_reported(tmp_path):
    train = tmp_path / "train.oprx"
    test = tmp_path / "test.oprx"
    labels = [0, 1] * 16
    bad = np.full((32, 3, 32, 32), np.nan, dtype=np.float32)
    write_export_file(train, labels, bad)
    make_separable_set(test, 8, seed=2)
    config = TrainConfig(
        train_export=str(train), test_path=str(test), test_kind="oprx",
        epochs=1, batch_size=8,
    )
    with pytest.raises(TrainingDiverged, match="non-finite"):
        train_and_eval(config)


def test_config_validation(tmp_path):
    with pytest.raises(ValueError):
        TrainConfig(train_export="x", test_path="y", epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(train_export="x", test_path="y", batch_size=0)


def test_cli_end_to_end(tmp_path):
    train = tmp_path / "train.oprx"
    test = tmp_path / "test.oprx"
    make_separable_set(train, 64, seed=3)
    make_separable_set(test, 16, seed=4)
    out = tmp_path / "report.json"
    rc = main([
        "--train-export", str(train), "--test-path", str(test),
        "--test-kind", "oprx", "--epochs", "1", "--batch-size", "32",
        "--seed", "1", "--out", str(out),
    ])
    assert rc == 0
    report = json.loads(out.read_text())
    assert 0.0 <= report["accuracy"] <= 1.0
    assert report["epochs"] == 1


def test_cli_exit_codes(tmp_path):
    missing = tmp_path / "none.oprx"
    test = tmp_path / "test.oprx"
    make_separable_set(test, 8, seed=5)
    rc = main([
        "--train-export", str(missing), "--test-path", str(test),
        "--test-kind", "oprx", "--out", str(tmp_path / "r.json"),
    ])
    assert rc == 3
    bad = tmp_path / "bad.oprx"
    bad.write_bytes(b"JUNKJUNKJUNKJUNK")
    rc = main([
        "--train-export", str(bad), "--test-path", str(test),
        "--test-kind", "oprx", "--out", str(tmp_path / "r.json"),
    ])
    assert rc == 4
