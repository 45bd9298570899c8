import math

import numpy as np
import pytest

from opre.archive import (
    Archive,
    ArchiveError,
    ArchiveMagicError,
    ArchiveTruncatedError,
    ArchiveVersionError,
    CompressedImage,
    accounting,
    export_reconstructed,
    read_archive,
    read_export,
    write_archive,
    write_export,
    write_ppm,
)
from opre.codec import QualitySetting, dequantize, quantize, subdivide

LOW = QualitySetting.low()
HIGH = QualitySetting.high()


def small_archive(seed=0, n_images=20, setting=LOW):
    rng = np.random.default_rng(seed)
    archive = Archive(setting)
    for i in range(n_images):
        archive.compress_image(rng.random((3, 32, 32)), label=int(rng.integers(0, 10)))
    return archive


# ---------------------------------------------------------------------------
# compression


def test_compress_same_image_twice():
    rng = np.random.default_rng(1)
    image = rng.random((3, 32, 32))
    archive = Archive(LOW)
    first = archive.compress_image(image, 3)
    size_after_first = archive.patch_memory.size()
    second = archive.compress_image(image, 3)
    assert np.array_equal(first.patch_ids, second.patch_ids)
    assert archive.patch_memory.size() == size_after_first


def test_compress_constant_image():
    archive = Archive(LOW)
    entry = archive.compress_image(np.full((3, 32, 32), 0.5), 0)
    assert np.all(entry.patch_ids == entry.patch_ids[0])
    assert archive.patch_memory.size() == 1


def test_compress_one_far_tile():
    # second image differs from the first in exactly one tile by more than epsilon
    archive = Archive(LOW)
    base = np.full((3, 32, 32), 0.5)
    other = base.copy()
    other[:, 0:4, 0:4] = 1.0
    from opre.codec import patch_distance

    qa = quantize(subdivide(base), 6)
    qb = quantize(subdivide(other), 6)
    assert patch_distance(qa[0], qb[0], 6) > 0.3  # sqrt(48 * 0.4^2) = 2.77
    a = archive.compress_image(base, 0)
    b = archive.compress_image(other, 0)
    assert np.array_equal(a.patch_ids[1:], b.patch_ids[1:])
    assert b.patch_ids[0] != a.patch_ids[0]
    assert archive.patch_memory.size() == 2


def test_compress_stream_matches_one_by_one():
    rng = np.random.default_rng(2)
    images = [rng.random((3, 32, 32)) for _ in range(9)]
    labels = list(range(9))
    one = Archive(LOW)
    for px, lab in zip(images, labels):
        one.compress_image(px, lab)
    for batch in (1, 4, 9):
        batched = Archive(LOW)
        batched.compress_stream(images, labels, batch_images=batch)
        assert batched == one


# ---------------------------------------------------------------------------
# reconstruction


def test_reconstruct_without_dedup_loss():
    rng = np.random.default_rng(3)
    image = rng.random((3, 32, 32))
    archive = Archive(LOW)
    archive.compress_image(image, 0)
    # every patch of the first image lands in an empty store: loss is pure quantization
    want = np.concatenate(
        [dequantize(quantize(subdivide(image), LOW.levels), LOW.levels)]
    ).reshape(64, 48)
    got = subdivide(archive.reconstruct_image(0))
    assert np.array_equal(got, want)


def test_reconstruct_all_zero():
    archive = Archive(LOW)
    archive.compress_image(np.zeros((3, 32, 32)), 0)
    assert np.array_equal(archive.reconstruct_image(0), np.zeros((3, 32, 32)))


def test_reconstruct_index_out_of_range():
    archive = small_archive()
    with pytest.raises(IndexError):
        archive.reconstruct_image(len(archive.images))


@pytest.mark.parametrize("setting", [LOW, HIGH], ids=["low", "high"])
def test_reconstruction_error_bound(setting):
    rng = np.random.default_rng(4)
    archive = Archive(setting)
    images = [rng.random((3, 32, 32)) for _ in range(30)]
    for px in images:
        archive.compress_image(px, 0)
    bound = setting.epsilon + math.sqrt(48) / (2 * (setting.levels - 1))
    worst = 0.0
    for i, px in enumerate(images):
        recon = subdivide(archive.reconstruct_image(i))
        orig = np.clip(subdivide(px), 0.0, 1.0)
        worst = max(worst, float(np.linalg.norm(recon - orig, axis=1).max()))
    assert worst <= bound + 1e-9


# ---------------------------------------------------------------------------
# accounting


def test_accounting_high_quality_cifar10_row():
    report = accounting(n_patches=1_807_000, n_images=50_000, bits_per_patch=256)
    assert report.patch_bytes == 57_824_000
    assert report.id_bytes == 12_800_000
    assert round(report.data_mb, 2) == 70.62


def test_accounting_low_quality_cifar10_row():
    report = accounting(n_patches=1_423_000, n_images=50_000, bits_per_patch=128)
    assert round(report.data_mb, 2) == 35.57


def test_accounting_empty():
    report = accounting(0, 0, 128)
    assert report.data_mb == 0.0
    assert report.total_mb == 0.0


def test_accounting_model_total():
    report = accounting(1_423_000, 50_000, 128, model_mb=39.88)
    assert report.total_mb == pytest.approx(75.448)


def test_memory_report_matches_formula():
    archive = small_archive(n_images=12)
    report = archive.memory_report()
    ref = accounting(archive.patch_memory.size(), 12, LOW.bits_per_patch)
    assert report == ref
    assert report.id_bytes == 12 * 64 * 4


# ---------------------------------------------------------------------------
# persistence


def test_archive_roundtrip(tmp_path):
    archive = small_archive(n_images=100)
    path = tmp_path / "a.opre"
    write_archive(archive, path)
    back = read_archive(path)
    assert back == archive
    # and a second write is byte-identical
    path2 = tmp_path / "b.opre"
    write_archive(back, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_archive_roundtrip_empty(tmp_path):
    archive = Archive(HIGH)
    path = tmp_path / "empty.opre"
    write_archive(archive, path)
    back = read_archive(path)
    assert back == archive
    assert back.memory_report().data_mb == 0.0


def test_archive_bad_magic(tmp_path):
    archive = small_archive(n_images=3)
    path = tmp_path / "a.opre"
    write_archive(archive, path)
    data = bytearray(path.read_bytes())
    data[0] ^= 0xFF
    path.write_bytes(bytes(data))
    with pytest.raises(ArchiveMagicError):
        read_archive(path)


def test_archive_bad_version(tmp_path):
    archive = small_archive(n_images=3)
    path = tmp_path / "a.opre"
    write_archive(archive, path)
    data = bytearray(path.read_bytes())
    data[4] = 99
    path.write_bytes(bytes(data))
    with pytest.raises(ArchiveVersionError):
        read_archive(path)


def test_archive_truncated_patch_blob(tmp_path):
    archive = small_archive(n_images=3)
    path = tmp_path / "a.opre"
    write_archive(archive, path)
    data = path.read_bytes()
    blob_end = 40 + archive.patch_memory.size() * 16
    path.write_bytes(data[: blob_end - 5])
    with pytest.raises(ArchiveTruncatedError, match="patch blob"):
        read_archive(path)


def test_archive_truncated_image_records(tmp_path):
    archive = small_archive(n_images=3)
    path = tmp_path / "a.opre"
    write_archive(archive, path)
    path.write_bytes(path.read_bytes()[:-7])
    with pytest.raises(ArchiveTruncatedError, match="image records"):
        read_archive(path)


def test_archive_id_out_of_range(tmp_path):
    archive = small_archive(n_images=3)
    path = tmp_path / "a.opre"
    write_archive(archive, path)
    data = bytearray(path.read_bytes())
    # last 4 bytes are the last patch id of the last image
    data[-4:] = (2**31).to_bytes(4, "little")
    path.write_bytes(bytes(data))
    with pytest.raises(ArchiveError, match="patch id"):
        read_archive(path)


# ---------------------------------------------------------------------------
# export


def test_export_roundtrip_exact(tmp_path):
    archive = small_archive(n_images=10, setting=HIGH)
    path = tmp_path / "a.oprx"
    export_reconstructed(archive, path)
    labels, pixels = read_export(path)
    assert labels.tolist() == [img.label for img in archive.images]
    for i in range(10):
        assert np.array_equal(pixels[i], archive.reconstruct_image(i).astype(np.float32))


def test_export_payload_size(tmp_path):
    archive = small_archive(n_images=7)
    path = tmp_path / "a.oprx"
    export_reconstructed(archive, path)
    assert path.stat().st_size == 14 + 7 * (4 + 3072 * 4)


def test_export_empty_is_header_only(tmp_path):
    archive = Archive(LOW)
    path = tmp_path / "empty.oprx"
    export_reconstructed(archive, path)
    assert path.stat().st_size == 14
    labels, pixels = read_export(path)
    assert len(labels) == 0
    assert pixels.shape == (0, 3, 32, 32)


def test_export_truncation_detected(tmp_path):
    archive = small_archive(n_images=2)
    path = tmp_path / "a.oprx"
    export_reconstructed(archive, path)
    path.write_bytes(path.read_bytes()[:-1])
    with pytest.raises(ArchiveTruncatedError):
        read_export(path)


def test_write_export_raw_roundtrip(tmp_path):
    rng = np.random.default_rng(8)
    pixels = rng.standard_normal((5, 3, 32, 32)).astype(np.float32)
    labels = np.array([0, 1, 0, 1, 1], dtype=np.uint32)
    path = tmp_path / "raw.oprx"
    write_export(path, labels, pixels)
    got_labels, got_pixels = read_export(path)
    assert np.array_equal(got_labels, labels)
    assert np.array_equal(got_pixels, pixels)


def test_ppm_dump(tmp_path):
    pixels = np.zeros((3, 32, 32))
    pixels[0] = 1.0  # pure red
    path = tmp_path / "img.ppm"
    write_ppm(pixels, path)
    data = path.read_bytes()
    assert data.startswith(b"P6\n32 32\n255\n")
    body = data[len(b"P6\n32 32\n255\n") :]
    assert len(body) == 32 * 32 * 3
    assert body[0:3] == b"\xff\x00\x00"
