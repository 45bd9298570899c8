import numpy as np
import pytest


def _patterned_records(n_records, record_len, label_fn, salt):
    """Deterministic fake records with the exact CIFAR byte layout."""
    records = np.empty((n_records, record_len), dtype=np.uint8)
    idx = np.arange(n_records)
    header = record_len - 3072
    for col, lab in enumerate(np.atleast_2d(label_fn(idx))):
        records[:, col] = lab
    px = (idx[:, None] * 7 + np.arange(3072)[None, :] * 13 + salt) % 256
    records[:, header:] = px
    return records


@pytest.fixture(scope="session")
def cifar10_dir(tmp_path_factory):
    """Five full-size CIFAR-10 binary train batches with patterned content."""
    root = tmp_path_factory.mktemp("cifar10")
    for b in range(1, 6):
        records = _patterned_records(
            10_000, 3073, lambda idx: ((idx + (b - 1) * 10_000) % 10,), salt=b
        )
        (root / f"data_batch_{b}.bin").write_bytes(records.tobytes())
    return root


@pytest.fixture(scope="session")
def cifar100_dir(tmp_path_factory):
    """Full-size CIFAR-100 binary train file (coarse byte, fine byte, pixels)."""
    root = tmp_path_factory.mktemp("cifar100")
    records = _patterned_records(
        50_000, 3074, lambda idx: (idx % 20, idx % 100), salt=3
    )
    (root / "train.bin").write_bytes(records.tobytes())
    return root
