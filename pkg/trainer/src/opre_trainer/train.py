"""Training loop: fresh random weights on exported pixels, evaluation on raw
test pixels, JSON-ready accuracy report."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from .data import check_provenance, filter_classes, load_test_set, read_export
from .model import build_model, parameter_bytes


class TrainingDiverged(RuntimeError):
    """The loss became non-finite."""


@dataclass
class TrainConfig:
    train_export: str
    test_path: str
    test_kind: str = "cifar10"  # cifar10 | cifar100 | oprx
    epochs: int = 50
    learning_rate: float = 1e-3
    batch_size: int = 64
    seed: int = 0
    augment: bool = False
    class_filter: list[int] | None = field(default=None)

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")


def _augment_batch(x: torch.Tensor, gen: torch.Generator) -> torch.Tensor:
    # random horizontal flip + 4-pixel shift crop
    flip = torch.rand(len(x), generator=gen) < 0.5
    x = x.clone()
    x[flip] = torch.flip(x[flip], dims=[3])
    pad = F.pad(x, (4, 4, 4, 4), mode="constant", value=0.0)
    out = torch.empty_like(x)
    offs = torch.randint(0, 9, (len(x), 2), generator=gen)
    for i in range(len(x)):
        r, c = int(offs[i, 0]), int(offs[i, 1])
        out[i] = pad[i, :, r : r + 32, c : c + 32]
    return out


def evaluate_model(model: torch.nn.Module, pixels: np.ndarray, labels: np.ndarray,
                   batch_size: int = 256) -> float:
    model.eval()
    correct = 0
    with torch.no_grad():
        for start in range(0, len(labels), batch_size):
            xb = torch.from_numpy(pixels[start : start + batch_size])
            logits = model(xb)
            correct += int((logits.argmax(dim=1).numpy() == labels[start : start + batch_size]).sum())
    return correct / len(labels)


def train_and_eval(config: TrainConfig) -> dict:
    """Train from random initialization on the export, evaluate on the raw
    test split, return the accuracy report."""
    check_provenance(config.train_export, config.test_path, config.test_kind)
    train_labels, train_pixels = read_export(config.train_export)
    test_labels, test_pixels = load_test_set(config.test_path, config.test_kind)
    if config.class_filter:
        train_labels, train_pixels = filter_classes(train_labels, train_pixels, config.class_filter)
        test_labels, test_pixels = filter_classes(test_labels, test_pixels, config.class_filter)
        num_classes = len(config.class_filter)
    else:
        num_classes = int(max(train_labels.max(), test_labels.max())) + 1
    if not len(train_labels) or not len(test_labels):
        raise ValueError("empty train or test split after filtering")

    torch.manual_seed(config.seed)
    model = build_model(num_classes)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    gen = torch.Generator().manual_seed(config.seed)

    x_all = torch.from_numpy(np.ascontiguousarray(train_pixels))
    y_all = torch.from_numpy(train_labels)
    n = len(y_all)
    start_time = time.perf_counter()
    final_loss = float("nan")
    step = 0
    for epoch in range(config.epochs):
        model.train()
        order = torch.randperm(n, generator=gen)
        for batch_start in range(0, n, config.batch_size):
            idx = order[batch_start : batch_start + config.batch_size]
            xb, yb = x_all[idx], y_all[idx]
            if config.augment:
                xb = _augment_batch(xb, gen)
            optimizer.zero_grad()
            loss = F.cross_entropy(model(xb), yb)
            if not torch.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch} step {step}")
            loss.backward()
            optimizer.step()
            final_loss = float(loss.detach())
            step += 1
    elapsed = time.perf_counter() - start_time

    accuracy = evaluate_model(model, test_pixels, test_labels)
    per_class: dict[str, float] = {}
    preds = []
    model.eval()
    with torch.no_grad():
        for start in range(0, len(test_labels), 256):
            xb = torch.from_numpy(test_pixels[start : start + 256])
            preds.append(model(xb).argmax(dim=1).numpy())
    preds = np.concatenate(preds)
    for c in np.unique(test_labels):
        mask = test_labels == c
        per_class[str(int(c))] = float((preds[mask] == c).mean())

    return {
        "accuracy": accuracy,
        "per_class_accuracy": per_class,
        "seed": config.seed,
        "epochs": config.epochs,
        "learning_rate": config.learning_rate,
        "batch_size": config.batch_size,
        "augment": config.augment,
        "class_filter": config.class_filter,
        "n_train": int(n),
        "n_test": int(len(test_labels)),
        "num_classes": num_classes,
        "model_parameter_bytes": parameter_bytes(model),
        "final_loss": final_loss,
        "train_path": str(config.train_export),
        "test_path": str(config.test_path),
        "wall_clock_s": elapsed,
    }
