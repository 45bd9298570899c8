"""Command-line surface: compress, stats, export, reconstruct, synth-gen, ncm.

Exit codes: 0 success, 2 bad configuration/usage, 3 I/O failure, 4 malformed
file format, 5 patch-memory capacity exhausted.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import archive as archive_io
from . import corpus, ncm
from .archive import Archive, ArchiveError
from .codec import (
    PATCHES_PER_IMAGE,
    CorruptBlockError,
    PackingError,
    PRESETS,
    QualitySetting,
)
from .store import CapacityError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_FORMAT = 4
EXIT_CAPACITY = 5

ACCOUNTING_KEYS = (
    "n_images",
    "n_patches",
    "total_patches",
    "retention",
    "patch_bytes",
    "id_bytes",
    "data_mb",
)


def _setting_from_args(args) -> tuple[QualitySetting, str]:
    explicit = [args.epsilon, args.levels, args.bits]
    if any(v is not None for v in explicit):
        if not all(v is not None for v in explicit):
            raise ValueError("--epsilon, --levels, and --bits must be given together")
        return QualitySetting(args.epsilon, args.levels, args.bits), "custom"
    return PRESETS[args.preset], args.preset


def _load_stream(args) -> list[corpus.LabeledImage]:
    if args.dataset == "cifar10":
        if args.data is None:
            raise ValueError("--data DIR is required for cifar10")
        return corpus.read_cifar10(args.data)
    if args.dataset == "cifar100":
        if args.data is None:
            raise ValueError("--data DIR is required for cifar100")
        return corpus.read_cifar100(args.data)
    if args.dataset == "synth":
        images, _ = corpus.gen_hyperplane_dataset(args.seed, args.synth_n)
        return images
    if args.dataset == "export-file":
        if args.data is None:
            raise ValueError("--data FILE is required for export-file")
        labels, pixels = archive_io.read_export(args.data)
        return [
            corpus.LabeledImage(pixels=pixels[i], label=int(labels[i]), source_index=i)
            for i in range(len(labels))
        ]
    raise ValueError(f"unknown dataset {args.dataset}")


def cmd_compress(args) -> int:
    setting, preset_name = _setting_from_args(args)
    images = _load_stream(args)
    if args.ordering == "class-incremental":
        images = corpus.order_class_incremental(images)
    archive = Archive(setting)
    start = time.perf_counter()
    archive.compress_stream(
        (im.pixels for im in images),
        (im.label for im in images),
        batch_images=args.batch_images,
    )
    elapsed = time.perf_counter() - start
    archive_io.write_archive(archive, args.out)
    report = archive.memory_report()
    total_patches = report.n_images * PATCHES_PER_IMAGE
    stats = {
        "dataset": args.dataset,
        "data_path": str(args.data) if args.data is not None else None,
        "ordering": args.ordering,
        "seed": args.seed if args.dataset == "synth" else None,
        "preset": preset_name,
        "epsilon": setting.epsilon,
        "levels": setting.levels,
        "bits_per_patch": setting.bits_per_patch,
        "batch_images": args.batch_images,
        "n_images": report.n_images,
        "n_patches": report.n_patches,
        "total_patches": total_patches,
        "retention": report.n_patches / total_patches if total_patches else 0.0,
        "patch_bytes": report.patch_bytes,
        "id_bytes": report.id_bytes,
        "data_mb": report.data_mb,
        "wall_clock_s": elapsed,
        "archive": str(args.out),
    }
    stats_path = args.stats if args.stats is not None else str(args.out) + ".stats.json"
    Path(stats_path).write_text(json.dumps(stats, indent=2) + "\n", encoding="utf-8")
    print(
        f"compressed {report.n_images} images: {report.n_patches}/{total_patches} "
        f"patches stored ({100.0 * stats['retention']:.1f}%), data {report.data_mb:.2f} MB, "
        f"{elapsed:.1f}s -> {args.out}"
    )
    return EXIT_OK


def archive_stats(archive: Archive, model_mb: float | None = None) -> dict:
    """Accounting recomputed from an archive alone; matches compress-time stats."""
    report = archive.memory_report(model_mb)
    total_patches = report.n_images * PATCHES_PER_IMAGE
    stats = {
        "epsilon": archive.setting.epsilon,
        "levels": archive.setting.levels,
        "bits_per_patch": archive.setting.bits_per_patch,
        "n_images": report.n_images,
        "n_patches": report.n_patches,
        "total_patches": total_patches,
        "retention": report.n_patches / total_patches if total_patches else 0.0,
        "patch_bytes": report.patch_bytes,
        "id_bytes": report.id_bytes,
        "data_mb": report.data_mb,
    }
    if model_mb is not None:
        stats["model_mb"] = report.model_mb
        stats["total_mb"] = report.total_mb
    return stats


def cmd_stats(args) -> int:
    archive = archive_io.read_archive(args.archive)
    stats = archive_stats(archive, args.model_mb)
    text = json.dumps(stats, indent=2)
    if args.json is not None:
        Path(args.json).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def cmd_export(args) -> int:
    archive = archive_io.read_archive(args.archive)
    archive_io.export_reconstructed(archive, args.out)
    print(f"exported {archive.n_images} reconstructed images -> {args.out}")
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    archive = archive_io.read_archive(args.archive)
    pixels = archive.reconstruct_image(args.index)
    archive_io.write_ppm(pixels, args.out)
    print(f"wrote image {args.index} -> {args.out}")
    return EXIT_OK


def cmd_synth_gen(args) -> int:
    images, spec = corpus.gen_hyperplane_dataset(args.seed, args.n)
    corpus.save_synthetic(args.out, images, spec)
    positives = sum(im.label for im in images)
    print(f"generated {len(images)} images (label 1: {positives}) -> {args.out}")
    return EXIT_OK


def cmd_ncm(args) -> int:
    report = ncm.evaluate(args.train, args.test)
    text = json.dumps(report, indent=2)
    if args.json is not None:
        Path(args.json).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="opre", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compress", help="compress a dataset into an archive")
    p.add_argument("--dataset", required=True, choices=["cifar10", "cifar100", "synth", "export-file"])
    p.add_argument("--data", help="dataset directory (cifar*) or export file (export-file)")
    p.add_argument("--preset", choices=sorted(PRESETS), default="low")
    p.add_argument("--epsilon", type=float, help="explicit threshold (with --levels/--bits)")
    p.add_argument("--levels", type=int, help="explicit quantization levels")
    p.add_argument("--bits", type=int, help="explicit packed bits per patch")
    p.add_argument("--ordering", choices=["class-incremental", "original"], default="class-incremental")
    p.add_argument("--seed", type=int, default=0, help="synthetic dataset seed")
    p.add_argument("--synth-n", type=int, default=50_000, help="synthetic dataset size")
    p.add_argument("--batch-images", type=int, default=64, help="images per dedup batch")
    p.add_argument("--out", required=True, help="archive output path")
    p.add_argument("--stats", help="stats JSON path (default: <out>.stats.json)")
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("stats", help="recompute accounting from an archive")
    p.add_argument("archive")
    p.add_argument("--model-mb", type=float, help="externally supplied model size")
    p.add_argument("--json", help="also write the report to this path")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("export", help="export reconstructed images for training")
    p.add_argument("archive")
    p.add_argument("out")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("reconstruct", help="dump one reconstructed image as PPM")
    p.add_argument("archive")
    p.add_argument("index", type=int)
    p.add_argument("out")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("synth-gen", help="generate the synthetic hyperplane dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=50_000)
    p.add_argument("out")
    p.set_defaults(func=cmd_synth_gen)

    p = sub.add_parser("ncm", help="nearest-class-mean evaluation over feature files")
    p.add_argument("train")
    p.add_argument("test")
    p.add_argument("--json", help="also write the report to this path")
    p.set_defaults(func=cmd_ncm)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CapacityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (ArchiveError, CorruptBlockError, PackingError,
            corpus.DatasetFormatError, ncm.FeatureFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
