"""Dataset ingestion: CIFAR binary readers, class-incremental ordering, and
the synthetic hyperplane-labeled Gaussian dataset.

CIFAR-10 batch files hold 10,000 records of 1 label byte + 3072 pixel bytes
(R, G, B planes, row-major); CIFAR-100 records carry 2 label bytes (coarse
then fine) and use the fine label. Pixels normalize to byte/255.

The synthetic generator draws a 32x32 standard-normal pattern, duplicates it
across the three channels, and labels each standard-normal image by the sign
of the dot product with that flattened pattern. The RNG is numpy's PCG64
(np.random.default_rng), so datasets are a pure function of the seed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import archive as archive_io
from .codec import CHANNELS, IMAGE_H, IMAGE_W

CIFAR10_TRAIN_FILES = [f"data_batch_{i}.bin" for i in range(1, 6)]
CIFAR10_TEST_FILES = ["test_batch.bin"]
CIFAR100_TRAIN_FILES = ["train.bin"]
CIFAR100_TEST_FILES = ["test.bin"]

_PIXEL_BYTES = CHANNELS * IMAGE_H * IMAGE_W  # 3072
_C10_RECORD = 1 + _PIXEL_BYTES
_C100_RECORD = 2 + _PIXEL_BYTES

SIDECAR_MAGIC = b"OPRH"
SIDECAR_VERSION = 1
_SIDECAR_HEADER = struct.Struct("<4sHQ")


class DatasetFormatError(ValueError):
    """A dataset file is missing, truncated, or malformed."""


@dataclass
class LabeledImage:
    pixels: np.ndarray  # (3, 32, 32) float32 in [0, 1] (synthetic data unclamped)
    label: int
    source_index: int


@dataclass
class HyperplaneSpec:
    seed: int
    v_hyperplane: np.ndarray  # (3072,) flattened channel-duplicated normal pattern


def _read_records(path: Path, record_len: int, n_records: int) -> np.ndarray:
    if not path.is_file():
        raise FileNotFoundError(f"missing dataset file {path}")
    data = path.read_bytes()
    if len(data) != record_len * n_records:
        raise DatasetFormatError(
            f"{path} holds {len(data)} bytes, expected {n_records} records of {record_len}"
        )
    return np.frombuffer(data, dtype=np.uint8).reshape(n_records, record_len)


def _to_images(raw_pixels: np.ndarray, labels: np.ndarray, start_index: int) -> list[LabeledImage]:
    floats = (raw_pixels.astype(np.float32) / 255.0).reshape(-1, CHANNELS, IMAGE_H, IMAGE_W)
    return [
        LabeledImage(pixels=floats[i], label=int(labels[i]), source_index=start_index + i)
        for i in range(len(labels))
    ]


def read_cifar10(directory, split: str = "train") -> list[LabeledImage]:
    """Read the CIFAR-10 binary batches; 50,000 train or 10,000 test images."""
    directory = Path(directory)
    files = CIFAR10_TRAIN_FILES if split == "train" else CIFAR10_TEST_FILES
    images: list[LabeledImage] = []
    for name in files:
        records = _read_records(directory / name, _C10_RECORD, 10_000)
        images.extend(_to_images(records[:, 1:], records[:, 0], len(images)))
    return images


def read_cifar100(directory, split: str = "train") -> list[LabeledImage]:
    """Read the CIFAR-100 binary file; labels are the fine labels (0..99)."""
    directory = Path(directory)
    if split == "train":
        name, n_records = CIFAR100_TRAIN_FILES[0], 50_000
    else:
        name, n_records = CIFAR100_TEST_FILES[0], 10_000
    records = _read_records(directory / name, _C100_RECORD, n_records)
    return _to_images(records[:, 2:], records[:, 1], 0)


def order_class_incremental(images: list[LabeledImage]) -> list[LabeledImage]:
    """Stable sort by label: class blocks in ascending label order, original
    dataset order preserved within each class."""
    return sorted(images, key=lambda im: im.label)


def gen_hyperplane_dataset(seed: int, n: int = 50_000) -> tuple[list[LabeledImage], HyperplaneSpec]:
    """Generate n standard-normal images labeled by a random hyperplane.

    The separating direction is a 32x32 N(0,1) pattern duplicated across the
    three channels and flattened channel-major. label = 1 iff the dot product
    of the flattened image with that vector is >= 0. Pixels are stored
    unclamped; quantization clamps later.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    pattern = rng.standard_normal((IMAGE_H, IMAGE_W))
    v = np.tile(pattern.ravel(), CHANNELS)
    images: list[LabeledImage] = []
    chunk = 1024
    for start in range(0, n, chunk):
        count = min(chunk, n - start)
        px = rng.standard_normal((count, CHANNELS, IMAGE_H, IMAGE_W))
        dots = px.reshape(count, -1) @ v
        px32 = px.astype(np.float32)
        for i in range(count):
            images.append(
                LabeledImage(
                    pixels=px32[i],
                    label=int(dots[i] >= 0.0),
                    source_index=start + i,
                )
            )
    return images, HyperplaneSpec(seed=seed, v_hyperplane=v)


def split_train_test(images: list[LabeledImage], train_frac: float = 0.8):
    """First train_frac of the list trains, the rest tests."""
    cut = int(round(len(images) * train_frac))
    return images[:cut], images[cut:]


def save_synthetic(path, images: list[LabeledImage], spec: HyperplaneSpec) -> None:
    """Persist a synthetic dataset as an export file plus a sidecar holding
    the seed and the hyperplane vector as float32."""
    labels = np.array([im.label for im in images], dtype=np.uint32)
    pixels = np.stack([im.pixels for im in images]).astype(np.float32)
    archive_io.write_export(path, labels, pixels)
    sidecar = Path(str(path) + ".hyperplane")
    with open(sidecar, "wb") as fh:
        fh.write(_SIDECAR_HEADER.pack(SIDECAR_MAGIC, SIDECAR_VERSION, spec.seed))
        fh.write(spec.v_hyperplane.astype("<f4").tobytes())


def load_synthetic(path) -> tuple[list[LabeledImage], HyperplaneSpec]:
    """Read back a persisted synthetic dataset and its sidecar."""
    labels, pixels = archive_io.read_export(path)
    sidecar = Path(str(path) + ".hyperplane")
    if not sidecar.is_file():
        raise FileNotFoundError(f"missing sidecar {sidecar}")
    data = sidecar.read_bytes()
    expected = _SIDECAR_HEADER.size + _PIXEL_BYTES * 4
    if len(data) != expected:
        raise DatasetFormatError(f"sidecar is {len(data)} bytes, expected {expected}")
    magic, version, seed = _SIDECAR_HEADER.unpack_from(data)
    if magic != SIDECAR_MAGIC:
        raise DatasetFormatError(f"bad sidecar magic {magic!r}")
    if version != SIDECAR_VERSION:
        raise DatasetFormatError(f"unsupported sidecar version {version}")
    v = np.frombuffer(data, dtype="<f4", offset=_SIDECAR_HEADER.size).astype(np.float64)
    images = [
        LabeledImage(pixels=pixels[i], label=int(labels[i]), source_index=i)
        for i in range(len(labels))
    ]
    return images, HyperplaneSpec(seed=seed, v_hyperplane=v)
