"""Online patch-redundancy-eliminating dataset compressor.

Splits 32x32 images into 64 quantized 3x4x4 patches, keeps each novel patch
once in an epsilon-separated dictionary, and stores images as 64 patch ids.
Includes bit-exact archive/export formats, memory accounting, CIFAR and
synthetic ingestion, and a nearest-class-mean baseline over feature files.
"""

from .archive import (
    Archive,
    ArchiveError,
    ArchiveMagicError,
    ArchiveTruncatedError,
    ArchiveVersionError,
    CompressedImage,
    MemoryReport,
    export_reconstructed,
    read_archive,
    read_export,
    write_archive,
    write_export,
    write_ppm,
)
from .codec import (
    CorruptBlockError,
    PackingError,
    PRESETS,
    QualitySetting,
    dequantize,
    pack,
    pack_many,
    patch_distance,
    quantize,
    reassemble,
    subdivide,
    unpack,
    unpack_many,
)
from .corpus import (
    DatasetFormatError,
    HyperplaneSpec,
    LabeledImage,
    gen_hyperplane_dataset,
    load_synthetic,
    order_class_incremental,
    read_cifar10,
    read_cifar100,
    save_synthetic,
    split_train_test,
)
from .ncm import ClassMeanState, FeatureFormatError, evaluate
from .store import CapacityError, PatchMemory

__version__ = "0.1.0"
