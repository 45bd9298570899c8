"""Training CLI: consumes an export file and a raw test set, writes a JSON
accuracy report.

Exit codes: 0 success, 2 bad configuration, 3 I/O failure, 4 malformed
input format, 5 training divergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .data import DataFormatError
from .train import TrainConfig, TrainingDiverged, train_and_eval


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="opre-train", description=__doc__)
    parser.add_argument("--train-export", required=True, help="export file with reconstructed pixels")
    parser.add_argument("--test-path", required=True, help="raw test set (CIFAR binary or export file)")
    parser.add_argument("--test-kind", choices=["cifar10", "cifar100", "oprx"], default="cifar10")
    parser.add_argument("--epochs", type=int, default=50)
    parser.add_argument("--learning-rate", type=float, default=1e-3)
    parser.add_argument("--batch-size", type=int, default=64)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--augment", action="store_true")
    parser.add_argument("--classes", help="comma-separated class labels to keep (e.g. 0,6)")
    parser.add_argument("--out", required=True, help="JSON report path")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        class_filter = None
        if args.classes:
            class_filter = [int(c) for c in args.classes.split(",")]
        config = TrainConfig(
            train_export=args.train_export,
            test_path=args.test_path,
            test_kind=args.test_kind,
            epochs=args.epochs,
            learning_rate=args.learning_rate,
            batch_size=args.batch_size,
            seed=args.seed,
            augment=args.augment,
            class_filter=class_filter,
        )
        report = train_and_eval(config)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 5
    except DataFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    Path(args.out).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    print(f"test accuracy {100 * report['accuracy']:.2f}% -> {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
