"""Compressed-image memory, binary persistence, reconstruction, and accounting.

Two little-endian file formats live here. The archive format holds the full
compressed state (packed patch dictionary plus per-image id arrays):

    magic "OPRE" | version u16 | channels u8 | patch_h u8 | patch_w u8 |
    levels u8 | bits_per_patch u16 | epsilon f64 | image_h u16 | image_w u16 |
    n_patches u64 | n_images u64 |
    patch blob (n_patches * bits_per_patch/8 bytes, id order) |
    image records (label u32, then 64 patch ids u32)

The export format is the trainer-facing dump of reconstructed pixels:

    magic "OPRX" | version u16 | n_images u64 |
    per image: label u32 + 3072 pixel float32 (channel-major)

Pixels export as float32 because grid values such as 7/19 are not 8-bit
exact. Accounting treats 1 MB as 10^6 bytes and counts ids at 4 bytes each;
labels are stored but excluded from data_mb.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import codec
from .codec import QualitySetting, dequantize, quantize, reassemble, subdivide
from .store import PatchMemory

MAGIC = b"OPRE"
VERSION = 1
EXPORT_MAGIC = b"OPRX"
EXPORT_VERSION = 1

_HEADER = struct.Struct("<4sHBBBBHdHHQQ")
_EXPORT_HEADER = struct.Struct("<4sHQ")
_IMAGE_WORDS = 1 + codec.PATCHES_PER_IMAGE  # label + 64 ids
_PIXELS_PER_IMAGE = codec.CHANNELS * codec.IMAGE_H * codec.IMAGE_W


class ArchiveError(ValueError):
    """Malformed archive or export file."""


class ArchiveMagicError(ArchiveError):
    pass


class ArchiveVersionError(ArchiveError):
    pass


class ArchiveTruncatedError(ArchiveError):
    pass


@dataclass
class CompressedImage:
    label: int
    patch_ids: np.ndarray  # (64,) uint32, subdivide order

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CompressedImage):
            return NotImplemented
        return self.label == other.label and np.array_equal(self.patch_ids, other.patch_ids)


@dataclass(frozen=True)
class MemoryReport:
    n_patches: int
    n_images: int
    patch_bytes: int
    id_bytes: int
    data_mb: float
    model_mb: float | None
    total_mb: float


class Archive:
    """Quality setting + patch memory + ordered compressed images."""

    def __init__(
        self,
        setting: QualitySetting,
        patch_memory: PatchMemory | None = None,
        images: list[CompressedImage] | None = None,
    ):
        self.setting = setting
        self.patch_memory = patch_memory if patch_memory is not None else PatchMemory(setting)
        self.images = images if images is not None else []

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Archive):
            return NotImplemented
        return (
            self.setting == other.setting
            and np.array_equal(self.patch_memory.codes, other.patch_memory.codes)
            and self.images == other.images
        )

    @property
    def n_images(self) -> int:
        return len(self.images)

    def compress_image(self, image: np.ndarray, label: int) -> CompressedImage:
        """Subdivide, quantize, dedup-insert, and record one image."""
        patches = subdivide(image)
        codes = quantize(patches, self.setting.levels)
        ids = self.patch_memory.insert_batch(codes)
        entry = CompressedImage(label=int(label), patch_ids=ids)
        self.images.append(entry)
        return entry

    def compress_stream(
        self, images, labels, batch_images: int = 64
    ) -> None:
        """Compress a stream, feeding batch_images * 64 patches per dedup batch.

        Results are identical to one-by-one compression for any batch size.
        """
        if batch_images < 1:
            raise ValueError("batch_images must be >= 1")
        pending_px: list[np.ndarray] = []
        pending_labels: list[int] = []

        def flush() -> None:
            if not pending_px:
                return
            codes = quantize(
                np.concatenate([subdivide(px) for px in pending_px]), self.setting.levels
            )
            ids = self.patch_memory.insert_batch(codes)
            per_image = ids.reshape(len(pending_px), codec.PATCHES_PER_IMAGE)
            for lab, row in zip(pending_labels, per_image):
                self.images.append(CompressedImage(label=lab, patch_ids=row.copy()))
            pending_px.clear()
            pending_labels.clear()

        for px, lab in zip(images, labels):
            pending_px.append(px)
            pending_labels.append(int(lab))
            if len(pending_px) == batch_images:
                flush()
        flush()

    def reconstruct_image(self, index: int) -> np.ndarray:
        """Dequantize the image's patches by id and reassemble, float64."""
        if not 0 <= index < len(self.images):
            raise IndexError(f"image index {index} out of range [0, {len(self.images)})")
        ids = self.images[index].patch_ids
        patches = dequantize(self.patch_memory.codes[ids], self.setting.levels)
        return reassemble(patches)

    def memory_report(self, model_mb: float | None = None) -> MemoryReport:
        return accounting(
            self.patch_memory.size(),
            len(self.images),
            self.setting.bits_per_patch,
            model_mb,
        )


def accounting(
    n_patches: int,
    n_images: int,
    bits_per_patch: int,
    model_mb: float | None = None,
) -> MemoryReport:
    """Data-size accounting: packed patches plus 4-byte ids, 1 MB = 10^6 bytes.

    Labels are stored in archives but excluded here.
    """
    patch_bytes = n_patches * bits_per_patch // 8
    id_bytes = n_images * codec.PATCHES_PER_IMAGE * 4
    data_mb = (patch_bytes + id_bytes) / 1e6
    total_mb = data_mb + (model_mb if model_mb is not None else 0.0)
    return MemoryReport(
        n_patches=n_patches,
        n_images=n_images,
        patch_bytes=patch_bytes,
        id_bytes=id_bytes,
        data_mb=data_mb,
        model_mb=model_mb,
        total_mb=total_mb,
    )


def write_archive(archive: Archive, path) -> None:
    setting = archive.setting
    if setting.levels > 255:
        raise ArchiveError("archive format stores levels as one byte (levels <= 255)")
    store = archive.patch_memory
    n_patches = store.size()
    n_images = len(archive.images)
    header = _HEADER.pack(
        MAGIC,
        VERSION,
        codec.CHANNELS,
        codec.PATCH_H,
        codec.PATCH_W,
        setting.levels,
        setting.bits_per_patch,
        setting.epsilon,
        codec.IMAGE_H,
        codec.IMAGE_W,
        n_patches,
        n_images,
    )
    records = np.empty((n_images, _IMAGE_WORDS), dtype="<u4")
    for i, img in enumerate(archive.images):
        records[i, 0] = img.label
        records[i, 1:] = img.patch_ids
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(codec.pack_many(store.codes, setting))
        fh.write(records.tobytes())


def read_archive(path) -> Archive:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise ArchiveTruncatedError("truncated header")
    (
        magic,
        version,
        channels,
        patch_h,
        patch_w,
        levels,
        bits,
        epsilon,
        image_h,
        image_w,
        n_patches,
        n_images,
    ) = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ArchiveMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise ArchiveVersionError(f"unsupported archive version {version}")
    if (channels, patch_h, patch_w) != (codec.CHANNELS, codec.PATCH_H, codec.PATCH_W):
        raise ArchiveError(
            f"unsupported patch geometry {(channels, patch_h, patch_w)}"
        )
    if (image_h, image_w) != (codec.IMAGE_H, codec.IMAGE_W):
        raise ArchiveError(f"unsupported image geometry {(image_h, image_w)}")
    setting = QualitySetting(epsilon=epsilon, levels=levels, bits_per_patch=bits)
    offset = _HEADER.size
    blob_len = n_patches * setting.block_bytes
    if len(data) < offset + blob_len:
        raise ArchiveTruncatedError("truncated patch blob")
    codes = codec.unpack_many(data[offset : offset + blob_len], n_patches, setting)
    offset += blob_len
    rec_len = n_images * _IMAGE_WORDS * 4
    if len(data) < offset + rec_len:
        raise ArchiveTruncatedError("truncated image records")
    records = np.frombuffer(data, dtype="<u4", count=n_images * _IMAGE_WORDS, offset=offset)
    records = records.reshape(n_images, _IMAGE_WORDS)
    if n_images and n_patches and records[:, 1:].max() >= n_patches:
        raise ArchiveError("patch id out of range")
    if n_images and n_patches == 0:
        raise ArchiveError("image records but empty patch memory")
    store = PatchMemory.from_codes(setting, codes)
    images = [
        CompressedImage(label=int(records[i, 0]), patch_ids=records[i, 1:].astype(np.uint32))
        for i in range(n_images)
    ]
    return Archive(setting, store, images)


def export_reconstructed(archive: Archive, path) -> None:
    """Write every reconstructed image with its label in the export format."""
    with open(path, "wb") as fh:
        fh.write(_EXPORT_HEADER.pack(EXPORT_MAGIC, EXPORT_VERSION, len(archive.images)))
        for i, img in enumerate(archive.images):
            fh.write(struct.pack("<I", img.label))
            pixels = archive.reconstruct_image(i).astype("<f4")
            fh.write(pixels.tobytes())


def write_export(path, labels, pixels) -> None:
    """Write raw labeled pixel data in the export format (synthetic sets, fixtures)."""
    labels = np.asarray(labels)
    pixels = np.asarray(pixels, dtype="<f4")
    if pixels.shape != (len(labels), codec.CHANNELS, codec.IMAGE_H, codec.IMAGE_W):
        raise ValueError(f"expected (n, 3, 32, 32) pixels, got {pixels.shape}")
    with open(path, "wb") as fh:
        fh.write(_EXPORT_HEADER.pack(EXPORT_MAGIC, EXPORT_VERSION, len(labels)))
        for lab, px in zip(labels, pixels):
            fh.write(struct.pack("<I", int(lab)))
            fh.write(px.tobytes())


def read_export(path) -> tuple[np.ndarray, np.ndarray]:
    """Read an export file; returns (labels uint32 (n,), pixels float32 (n,3,32,32))."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _EXPORT_HEADER.size:
        raise ArchiveTruncatedError("truncated export header")
    magic, version, n_images = _EXPORT_HEADER.unpack_from(data)
    if magic != EXPORT_MAGIC:
        raise ArchiveMagicError(f"bad magic {magic!r}, expected {EXPORT_MAGIC!r}")
    if version != EXPORT_VERSION:
        raise ArchiveVersionError(f"unsupported export version {version}")
    record = 4 + _PIXELS_PER_IMAGE * 4
    if len(data) != _EXPORT_HEADER.size + n_images * record:
        raise ArchiveTruncatedError("truncated image payload")
    labels = np.empty(n_images, dtype=np.uint32)
    pixels = np.empty((n_images, codec.CHANNELS, codec.IMAGE_H, codec.IMAGE_W), dtype=np.float32)
    offset = _EXPORT_HEADER.size
    for i in range(n_images):
        (labels[i],) = struct.unpack_from("<I", data, offset)
        offset += 4
        pixels[i] = np.frombuffer(data, dtype="<f4", count=_PIXELS_PER_IMAGE, offset=offset).reshape(
            codec.CHANNELS, codec.IMAGE_H, codec.IMAGE_W
        )
        offset += _PIXELS_PER_IMAGE * 4
    return labels, pixels


def write_ppm(pixels: np.ndarray, path) -> None:
    """Dump one image as binary PPM (P6), rounded to 8 bits for viewing."""
    pixels = np.asarray(pixels, dtype=np.float64)
    if pixels.shape != (codec.CHANNELS, codec.IMAGE_H, codec.IMAGE_W):
        raise ValueError(f"expected (3, 32, 32) pixels, got {pixels.shape}")
    rgb = np.floor(np.clip(pixels, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{codec.IMAGE_W} {codec.IMAGE_H}\n255\n".encode())
        fh.write(rgb.transpose(1, 2, 0).tobytes())
