"""huretex-export: train the MNIST model and write its activation trace."""

from __future__ import annotations

import argparse
import sys

from .export import ExportError, ExportSpec, train_and_export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="huretex-export",
        description="Train a small MNIST CNN and export per-layer activations "
                    "of its training images as a huretex trace.")
    parser.add_argument("--epochs", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--cap", type=int, default=None,
                        help="train on and export only the first N training images")
    parser.add_argument("--out", required=True, help="trace output path (.ndjson)")
    parser.add_argument("--filters", default="8,16",
                        help="conv filter counts, e.g. 8,16")
    parser.add_argument("--dense", type=int, default=64)
    parser.add_argument("--kernel", type=int, default=3)
    parser.add_argument("--pool", type=int, default=2)
    parser.add_argument("--batch-size", type=int, default=128)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        filters = tuple(int(f) for f in args.filters.split(","))
        spec = ExportSpec(conv_filters=filters, kernel_size=args.kernel,
                          pool_size=args.pool, dense_units=args.dense,
                          epochs=args.epochs, seed=args.seed, cap=args.cap,
                          batch_size=args.batch_size)
        metrics = train_and_export(spec, args.out)
    except (ExportError, ValueError) as exc:
        print(f"huretex-export: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out}: {metrics['samples']} records, "
          f"train accuracy {metrics['train_accuracy']:.4f}, "
          f"test accuracy {metrics['test_accuracy']:.4f}")
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
