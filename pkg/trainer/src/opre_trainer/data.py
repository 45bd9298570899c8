"""Dataset inputs for training runs.

Two file formats are consumed, both little-endian:

  - export files ("OPRX"): magic 4s | version u16 = 1 | n_images u64 | per
    image a u32 label and 3072 float32 pixels (channel-major 3x32x32). This
    is the compressed-reconstruction dump the compressor's export command
    writes, and also how synthetic datasets are persisted.
  - CIFAR binary test batches: 10,000 records of 1 (or 2, CIFAR-100) label
    bytes + 3072 pixel bytes; pixels normalize to byte/255.

Training must see only reconstructed (exported) pixels and evaluation only
raw test pixels; check_provenance enforces what the file paths can tell us:
the train file must carry the export magic, the test source must be a raw
dataset, and the two must not alias.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

EXPORT_MAGIC = b"OPRX"
EXPORT_VERSION = 1
_EXPORT_HEADER = struct.Struct("<4sHQ")
_PIXELS = 3 * 32 * 32


class DataFormatError(ValueError):
    """An input file is missing, truncated, or not the declared format."""


def read_export(path) -> tuple[np.ndarray, np.ndarray]:
    """Read an export file -> (labels int64 (n,), pixels float32 (n,3,32,32))."""
    data = Path(path).read_bytes()
    if len(data) < _EXPORT_HEADER.size:
        raise DataFormatError(f"{path}: truncated header")
    magic, version, n_images = _EXPORT_HEADER.unpack_from(data)
    if magic != EXPORT_MAGIC:
        raise DataFormatError(f"{path}: bad magic {magic!r}")
    if version != EXPORT_VERSION:
        raise DataFormatError(f"{path}: unsupported version {version}")
    record = 4 + _PIXELS * 4
    if len(data) != _EXPORT_HEADER.size + n_images * record:
        raise DataFormatError(f"{path}: truncated payload")
    raw = np.frombuffer(data, dtype=np.uint8, offset=_EXPORT_HEADER.size)
    raw = raw.reshape(n_images, record)
    labels = raw[:, :4].copy().view("<u4").reshape(n_images).astype(np.int64)
    pixels = raw[:, 4:].copy().view("<f4").reshape(n_images, 3, 32, 32)
    return labels, pixels


def read_cifar_test(path, fine_labels: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Read one CIFAR binary batch file -> (labels, float32 pixels in [0,1])."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"missing test batch {path}")
    data = path.read_bytes()
    header = 2 if fine_labels else 1
    record = header + _PIXELS
    if len(data) % record != 0 or not data:
        raise DataFormatError(f"{path}: size {len(data)} is not whole {record}-byte records")
    raw = np.frombuffer(data, dtype=np.uint8).reshape(-1, record)
    labels = raw[:, header - 1].astype(np.int64)
    pixels = (raw[:, header:].astype(np.float32) / 255.0).reshape(-1, 3, 32, 32)
    return labels, pixels


def check_provenance(train_path, test_path, test_kind: str) -> None:
    """Reject configurations where train/test roles could be swapped or mixed."""
    train_path, test_path = Path(train_path), Path(test_path)
    if train_path.resolve() == test_path.resolve():
        raise DataFormatError("train export and test set must be different files")
    with open(train_path, "rb") as fh:
        if fh.read(4) != EXPORT_MAGIC:
            raise DataFormatError(
                f"{train_path}: training input must be an export file (magic {EXPORT_MAGIC!r})"
            )
    if test_kind in ("cifar10", "cifar100"):
        with open(test_path, "rb") as fh:
            if fh.read(4) == EXPORT_MAGIC:
                raise DataFormatError(
                    f"{test_path}: raw {test_kind} test batch expected, got an export file"
                )
    elif test_kind != "oprx":
        raise DataFormatError(f"unknown test kind {test_kind!r}")


def load_test_set(path, test_kind: str) -> tuple[np.ndarray, np.ndarray]:
    if test_kind == "cifar10":
        return read_cifar_test(path, fine_labels=False)
    if test_kind == "cifar100":
        return read_cifar_test(path, fine_labels=True)
    if test_kind == "oprx":
        return read_export(path)
    raise DataFormatError(f"unknown test kind {test_kind!r}")


def filter_classes(labels: np.ndarray, pixels: np.ndarray, keep: list[int]):
    """Restrict to the given class labels, remapped to 0..k-1 in sorted order."""
    keep_sorted = sorted(keep)
    mask = np.isin(labels, keep_sorted)
    remap = {c: i for i, c in enumerate(keep_sorted)}
    labels = np.array([remap[int(c)] for c in labels[mask]], dtype=np.int64)
    return labels, pixels[mask]
