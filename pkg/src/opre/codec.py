"""Patch geometry, quantization, and fixed-width bit packing.

Images are 3x32x32 float tensors in [0,1], split into 64 non-overlapping
3x4x4 patches. Each patch is a 48-vector (channel-major, then row-major
inside the 4x4 window). Pixel values are quantized onto a uniform grid
k/(levels-1) and a code vector packs into a fixed-width block by treating
the 48 codes as mixed-radix digits of one unsigned integer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

CHANNELS = 3
PATCH_H = 4
PATCH_W = 4
PATCH_DIM = CHANNELS * PATCH_H * PATCH_W  # 48
IMAGE_H = 32
IMAGE_W = 32
GRID = IMAGE_H // PATCH_H  # 8 tiles per side
PATCHES_PER_IMAGE = GRID * GRID  # 64

# Digits per 64-bit limb in the vectorized packing path. levels**_LIMB_DIGITS
# must fit in int64, which holds for levels <= 1448.
_LIMB_DIGITS = 6
_LIMB_FAST_MAX_LEVELS = 1448


class PackingError(ValueError):
    """A code vector cannot be encoded under the active setting."""


class CorruptBlockError(ValueError):
    """A packed block decodes outside the valid code space."""


@dataclass(frozen=True)
class QualitySetting:
    """Compression knobs: dedup threshold, grid resolution, packed width."""

    epsilon: float
    levels: int
    bits_per_patch: int

    def __post_init__(self) -> None:
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.levels < 2:
            raise ValueError(f"levels must be >= 2, got {self.levels}")
        if self.bits_per_patch <= 0 or self.bits_per_patch % 8 != 0:
            raise ValueError(
                f"bits_per_patch must be a positive multiple of 8, got {self.bits_per_patch}"
            )
        if self.levels**PATCH_DIM > 2**self.bits_per_patch:
            raise ValueError(
                f"code space {self.levels}^{PATCH_DIM} exceeds 2^{self.bits_per_patch}"
            )

    @property
    def block_bytes(self) -> int:
        return self.bits_per_patch // 8

    @classmethod
    def low(cls) -> "QualitySetting":
        return cls(epsilon=0.3, levels=6, bits_per_patch=128)

    @classmethod
    def high(cls) -> "QualitySetting":
        return cls(epsilon=0.2, levels=20, bits_per_patch=256)


PRESETS = {"low": QualitySetting.low(), "high": QualitySetting.high()}


def subdivide(image: np.ndarray) -> np.ndarray:
    """Split a 3x32x32 image into its 64 patch vectors.

    Returns a (64, 48) float64 array in row-major tile order (tile row
    outer, tile column inner).
    """
    image = np.asarray(image, dtype=np.float64)
    if image.shape != (CHANNELS, IMAGE_H, IMAGE_W):
        raise ValueError(f"expected image shape (3, 32, 32), got {image.shape}")
    tiles = image.reshape(CHANNELS, GRID, PATCH_H, GRID, PATCH_W)
    return tiles.transpose(1, 3, 0, 2, 4).reshape(PATCHES_PER_IMAGE, PATCH_DIM)


def reassemble(patches: np.ndarray) -> np.ndarray:
    """Exact inverse of subdivide: 64 patch vectors back to a 3x32x32 image."""
    patches = np.asarray(patches, dtype=np.float64)
    if patches.shape != (PATCHES_PER_IMAGE, PATCH_DIM):
        raise ValueError(f"expected (64, 48) patches, got {patches.shape}")
    tiles = patches.reshape(GRID, GRID, CHANNELS, PATCH_H, PATCH_W)
    return tiles.transpose(2, 0, 3, 1, 4).reshape(CHANNELS, IMAGE_H, IMAGE_W)


def quantize(values: np.ndarray, levels: int) -> np.ndarray:
    """Map values in [0,1] to the nearest grid index k/(levels-1).

    Inputs are clamped to [0,1] first; exact half-way ties round toward the
    larger index. Works elementwise on any shape. Returns uint16 codes.
    """
    if levels < 2:
        raise ValueError(f"levels must be >= 2, got {levels}")
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    return np.floor(v * (levels - 1) + 0.5).astype(np.uint16)


def dequantize(codes: np.ndarray, levels: int) -> np.ndarray:
    """Grid value of each code: codes/(levels-1), float64."""
    return np.asarray(codes).astype(np.float64) / (levels - 1)


def patch_distance(a: np.ndarray, b: np.ndarray, levels: int) -> float:
    """Euclidean distance between two code vectors on the dequantized grid."""
    da = dequantize(a, levels)
    db = dequantize(b, levels)
    return float(np.sqrt(np.sum((da - db) ** 2)))


def squared_code_distance(a: np.ndarray, b: np.ndarray) -> int:
    """Integer squared distance in code units: sum((a_i - b_i)^2).

    The dequantized Euclidean distance equals sqrt of this over (levels-1),
    so ordering and threshold tests can run in exact integer arithmetic.
    """
    d = np.asarray(a, dtype=np.int64) - np.asarray(b, dtype=np.int64)
    return int(np.sum(d * d))


def max_sq_within(epsilon: float, levels: int) -> int:
    """Largest integer s with sqrt(s)/(levels-1) < epsilon, or -1 if none.

    Turns the strict distance-below-epsilon test into an exact comparison on
    squared code distances.
    """
    if epsilon <= 0:
        return -1
    x = (epsilon * (levels - 1)) ** 2
    t = math.floor(x)
    if t == x:
        t -= 1
    return t


def _validate_codes(codes: np.ndarray, levels: int) -> np.ndarray:
    codes = np.asarray(codes)
    if codes.shape[-1] != PATCH_DIM:
        raise PackingError(f"expected {PATCH_DIM} codes per patch, got shape {codes.shape}")
    if codes.size and (np.any(codes < 0) or np.any(codes >= levels)):
        raise PackingError(f"codes out of range [0, {levels - 1})")
    return codes.astype(np.int64)


def _limb_weights(levels: int) -> np.ndarray:
    return levels ** np.arange(_LIMB_DIGITS, dtype=np.int64)


def _codes_to_limbs(codes: np.ndarray, levels: int) -> np.ndarray:
    # (n, 48) -> (n, 8) limbs of radix levels**6, little-endian limb order
    groups = codes.reshape(codes.shape[0], PATCH_DIM // _LIMB_DIGITS, _LIMB_DIGITS)
    return groups @ _limb_weights(levels)


def pack_many(codes: np.ndarray, setting: QualitySetting) -> bytes:
    """Pack an (n, 48) code array into n fixed-width blocks, concatenated."""
    codes = _validate_codes(np.atleast_2d(codes), setting.levels)
    width = setting.block_bytes
    if setting.levels <= _LIMB_FAST_MAX_LEVELS:
        limbs = _codes_to_limbs(codes, setting.levels)
        base = setting.levels**_LIMB_DIGITS
        out = bytearray()
        for row in limbs.tolist():
            n = 0
            for limb in reversed(row):
                n = n * base + limb
            out += n.to_bytes(width, "little")
        return bytes(out)
    out = bytearray()
    for row in codes.tolist():
        n = 0
        for digit in reversed(row):
            n = n * setting.levels + digit
        out += n.to_bytes(width, "little")
    return bytes(out)


def pack(codes: np.ndarray, setting: QualitySetting) -> bytes:
    """Pack one 48-code vector into a bits_per_patch/8 byte block.

    Codes are the little-endian mixed-radix digits of a single unsigned
    integer, serialized little-endian; the map is a bijection on the code
    space and unused high bits are zero.
    """
    codes = np.asarray(codes)
    if codes.ndim != 1:
        raise PackingError(f"pack expects a single code vector, got shape {codes.shape}")
    return pack_many(codes[None, :], setting)


def unpack_many(blob: bytes, n_patches: int, setting: QualitySetting) -> np.ndarray:
    """Inverse of pack_many: decode n_patches blocks into an (n, 48) uint16 array."""
    width = setting.block_bytes
    if len(blob) != n_patches * width:
        raise CorruptBlockError(
            f"patch blob holds {len(blob)} bytes, expected {n_patches}x{width}"
        )
    levels = setting.levels
    limit = levels**PATCH_DIM
    if levels <= _LIMB_FAST_MAX_LEVELS:
        base = levels**_LIMB_DIGITS
        n_limbs = PATCH_DIM // _LIMB_DIGITS
        limbs = np.empty((n_patches, n_limbs), dtype=np.int64)
        for i in range(n_patches):
            n = int.from_bytes(blob[i * width : (i + 1) * width], "little")
            if n >= limit:
                raise CorruptBlockError(f"block {i} decodes outside the code space")
            for j in range(n_limbs):
                n, limbs[i, j] = divmod(n, base)
        # limb j covers digit positions j*6..j*6+5
        groups = limbs[:, :, None] // _limb_weights(levels)[None, None, :] % levels
        return groups.reshape(n_patches, PATCH_DIM).astype(np.uint16)
    codes = np.empty((n_patches, PATCH_DIM), dtype=np.uint16)
    for i in range(n_patches):
        n = int.from_bytes(blob[i * width : (i + 1) * width], "little")
        if n >= limit:
            raise CorruptBlockError(f"block {i} decodes outside the code space")
        for k in range(PATCH_DIM):
            n, codes[i, k] = divmod(n, levels)
    return codes


def unpack(block: bytes, setting: QualitySetting) -> np.ndarray:
    """Decode one packed block back to its 48-code vector."""
    if len(block) != setting.block_bytes:
        raise CorruptBlockError(
            f"block is {len(block)} bytes, expected {setting.block_bytes}"
        )
    return unpack_many(block, 1, setting)[0]
