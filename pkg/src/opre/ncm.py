"""Streaming nearest-class-mean classifier over externally supplied features.

Feature files are UTF-8 text with LF line endings: a header line
"d=<int>,classes=<int>" followed by one row per sample, "label,v1,...,vd"
with decimal floats. Per-class sums use Neumaier-compensated float64
accumulation so results are insensitive to presentation order; prediction is
the class whose mean is nearest in Euclidean distance, ties to the lowest
class index. No RNG anywhere: accuracy is a pure function of the two files.
"""

from __future__ import annotations

import numpy as np


class FeatureFormatError(ValueError):
    """A feature file header or row is malformed."""


class ClassMeanState:
    """Per-class compensated sums and counts for d-dimensional features."""

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError(f"feature dimension must be >= 1, got {dim}")
        self.dim = dim
        self._sums: dict[int, np.ndarray] = {}
        self._comps: dict[int, np.ndarray] = {}
        self.counts: dict[int, int] = {}

    def update(self, feature: np.ndarray, label: int) -> None:
        """Accumulate one feature vector into its class sum."""
        f = np.asarray(feature, dtype=np.float64)
        if f.shape != (self.dim,):
            raise ValueError(f"feature has shape {f.shape}, expected ({self.dim},)")
        label = int(label)
        if label not in self._sums:
            self._sums[label] = np.zeros(self.dim)
            self._comps[label] = np.zeros(self.dim)
            self.counts[label] = 0
        s, c = self._sums[label], self._comps[label]
        t = s + f
        c += np.where(np.abs(s) >= np.abs(f), (s - t) + f, (f - t) + s)
        self._sums[label] = t
        self.counts[label] += 1

    def mean(self, label: int) -> np.ndarray:
        count = self.counts.get(label, 0)
        if count == 0:
            raise ValueError(f"class {label} has no observations")
        return (self._sums[label] + self._comps[label]) / count

    def trained_classes(self) -> list[int]:
        return sorted(self.counts)

    def predict(self, feature: np.ndarray) -> int:
        """Class with the nearest mean; ties go to the lowest class index."""
        f = np.asarray(feature, dtype=np.float64)
        if f.shape != (self.dim,):
            raise ValueError(f"feature has shape {f.shape}, expected ({self.dim},)")
        labels = self.trained_classes()
        if not labels:
            raise ValueError("no trained class")
        best_label = labels[0]
        best_d2 = float(np.sum((f - self.mean(best_label)) ** 2))
        for label in labels[1:]:
            d2 = float(np.sum((f - self.mean(label)) ** 2))
            if d2 < best_d2:
                best_d2 = d2
                best_label = label
        return best_label


def _parse_header(line: str, path) -> tuple[int, int]:
    try:
        d_part, c_part = line.strip().split(",")
        if not (d_part.startswith("d=") and c_part.startswith("classes=")):
            raise ValueError
        d = int(d_part[2:])
        n_classes = int(c_part[8:])
    except ValueError:
        raise FeatureFormatError(f"{path}: bad header {line.strip()!r}") from None
    if d < 1 or n_classes < 1:
        raise FeatureFormatError(f"{path}: nonpositive header fields in {line.strip()!r}")
    return d, n_classes


def iter_feature_rows(path):
    """Yield (label, feature float64 array) rows after validating the header."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if not header:
            raise FeatureFormatError(f"{path}: empty file")
        d, n_classes = _parse_header(header, path)
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            fields = line.rstrip("\n").split(",")
            if len(fields) != d + 1:
                raise FeatureFormatError(
                    f"{path}:{lineno}: expected {d + 1} fields, got {len(fields)}"
                )
            try:
                label = int(fields[0])
                feature = np.array(fields[1:], dtype=np.float64)
            except ValueError:
                raise FeatureFormatError(f"{path}:{lineno}: unparsable row") from None
            if not 0 <= label < n_classes:
                raise FeatureFormatError(
                    f"{path}:{lineno}: label {label} outside [0, {n_classes})"
                )
            yield label, feature


def read_feature_header(path) -> tuple[int, int]:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if not header:
            raise FeatureFormatError(f"{path}: empty file")
        return _parse_header(header, path)


def evaluate(train_path, test_path) -> dict:
    """Stream the train file into class means, predict the test file.

    Returns a JSON-ready report with overall and per-class accuracy.
    """
    d_train, classes_train = read_feature_header(train_path)
    d_test, classes_test = read_feature_header(test_path)
    if d_train != d_test:
        raise FeatureFormatError(
            f"feature dimension mismatch: train d={d_train}, test d={d_test}"
        )
    state = ClassMeanState(d_train)
    n_train = 0
    for label, feature in iter_feature_rows(train_path):
        state.update(feature, label)
        n_train += 1
    correct = 0
    n_test = 0
    per_class_total: dict[int, int] = {}
    per_class_correct: dict[int, int] = {}
    for label, feature in iter_feature_rows(test_path):
        pred = state.predict(feature)
        per_class_total[label] = per_class_total.get(label, 0) + 1
        if pred == label:
            correct += 1
            per_class_correct[label] = per_class_correct.get(label, 0) + 1
        n_test += 1
    if n_test == 0:
        raise FeatureFormatError(f"{test_path}: no test rows")
    return {
        "accuracy": correct / n_test,
        "n_train": n_train,
        "n_test": n_test,
        "dim": d_train,
        "classes": max(classes_train, classes_test),
        "per_class_accuracy": {
            str(label): per_class_correct.get(label, 0) / total
            for label, total in sorted(per_class_total.items())
        },
    }
