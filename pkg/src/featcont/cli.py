"""Command-line entry points.

Subcommands: synth-dataset, train, evaluate, compare-policies, dump-ppm.
Every flag mirrors a RunConfig field; --config points at a key=value file
whose values the flags override.  Exit codes: 0 success, 2 config error,
3 data error, 4 numerical abort.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import datasets as ds
from .harness import (
    ConfigError,
    NumericalAbortError,
    RunConfig,
    build_datasets,
    compare_policies,
    comparison_to_csv,
    config_from,
    evaluate,
    parse_config_file,
    run,
    synth_dataset,
)
from .network import load_network

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _add_config_flags(p: argparse.ArgumentParser, training: bool = True) -> None:
    p.add_argument("--config", "-c", help="key=value config file; flags override its values")
    p.add_argument("--experiment", choices=("colored-mnist", "augment-demo", "composite-demo"))
    p.add_argument("--sigma2", type=float, help="color-noise variance of the biased palette")
    p.add_argument("--train-size", type=int, dest="train_size")
    p.add_argument("--test-size", type=int, dest="test_size")
    p.add_argument("--palette-seed", type=int, dest="palette_seed")
    p.add_argument("--mnist-images", dest="mnist_images", help="IDX image file (procedural digits when omitted)")
    p.add_argument("--mnist-labels", dest="mnist_labels", help="IDX label file")
    p.add_argument("--dataset", help="directory with train.bin/test.bin to load instead of synthesizing")
    p.add_argument("--seed", type=int)
    if training:
        p.add_argument("--strategy", choices=("mixing", "batch-mixing", "blending", "opacity-blend"))
        p.add_argument("--augment", choices=("mixup", "cutmix"))
        p.add_argument("--lambda-dist", dest="lambda_dist", choices=("uniform", "beta"))
        p.add_argument("--beta-param", type=float, dest="beta_param")
        p.add_argument("--schedule", help="linear | constant:c | step:k1,k2 | piecewise:k1,k2")
        p.add_argument("--optimizer", choices=("sgd", "adam"))
        p.add_argument("--lr", type=float)
        p.add_argument("--momentum", type=float)
        p.add_argument("--weight-decay", type=float, dest="weight_decay")
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", type=int, dest="batch_size")


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    file_values = parse_config_file(args.config) if args.config else {}
    overrides = {
        name: getattr(args, name)
        for name in (
            "experiment", "sigma2", "train_size", "test_size", "palette_seed",
            "mnist_images", "mnist_labels", "dataset", "seed", "strategy",
            "augment", "lambda_dist", "beta_param", "schedule", "optimizer",
            "lr", "momentum", "weight_decay", "epochs", "batch_size",
            "metrics_out", "summary_out", "model_out", "timing",
        )
        if hasattr(args, name)
    }
    return config_from(file_values, overrides)


def _cmd_synth_dataset(args) -> int:
    cfg = _config_from_args(args)
    manifest = synth_dataset(cfg, args.out)
    print(manifest)
    return EXIT_OK


def _cmd_train(args) -> int:
    cfg = _config_from_args(args)
    result = run(cfg)
    print(f"best_acc={result.summary.best_acc!r}")
    print(f"avg_last10_acc={result.summary.avg_last10_acc!r}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    net = load_network(args.model)
    pairs = ds.load_paired(Path(args.dataset) / f"{args.split}.bin")
    images = pairs.x1 if args.variant == "full" else pairs.x0
    acc = evaluate(net, images, pairs.labels)
    print(f"accuracy={acc!r}")
    return EXIT_OK


def _cmd_compare_policies(args) -> int:
    cfg = _config_from_args(args)
    rows, errors = compare_policies(cfg, args.policy)
    csv_text = comparison_to_csv(rows)
    if args.out:
        Path(args.out).write_text(csv_text, encoding="utf-8")
    print(csv_text, end="")
    for err in errors:
        print(f"error: {err}", file=sys.stderr)
    return EXIT_NUMERIC if errors else EXIT_OK


def _cmd_dump_ppm(args) -> int:
    cfg = _config_from_args(args)
    if args.dataset:
        pairs = ds.load_paired(Path(args.dataset) / f"{args.split}.bin")
    else:
        data = build_datasets(cfg)
        pairs = data.train if args.split == "train" else data.test
    count = min(args.count, len(pairs))
    stack = pairs.x1[:count] if args.variant == "full" else pairs.x0[:count]
    ds.write_ppm(ds.image_grid(np.asarray(stack, dtype=np.float64), cols=args.cols), args.out)
    print(args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="featcont",
        description="Feature-continuation training runs on paired datasets",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-dataset", help="synthesize and persist a paired dataset + manifest")
    _add_config_flags(p, training=False)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=_cmd_synth_dataset)

    p = sub.add_parser("train", help="run one training experiment")
    _add_config_flags(p)
    p.add_argument("--metrics-out", dest="metrics_out", help="per-epoch metrics CSV path")
    p.add_argument("--summary-out", dest="summary_out", help="summary key=value file path")
    p.add_argument("--model-out", dest="model_out", help="trained network (.npz) path")
    p.add_argument("--timing", action="store_true", default=None,
                   help="write real wall_ms into the CSV (breaks byte-reproducibility)")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("evaluate", help="accuracy of a saved model on a saved dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True, help="directory with train.bin/test.bin")
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--variant", choices=("full", "focused"), default="full")
    p.set_defaults(fn=_cmd_evaluate)

    p = sub.add_parser("compare-policies", help="run several alpha schedules on shared data")
    _add_config_flags(p)
    p.add_argument("--policy", action="append", required=True,
                   help="schedule spec; repeat the flag for each policy")
    p.add_argument("--out", help="comparison CSV path")
    p.set_defaults(fn=_cmd_compare_policies)

    p = sub.add_parser("dump-ppm", help="write an inspection grid as binary PPM")
    _add_config_flags(p, training=False)
    p.add_argument("--split", choices=("train", "test"), default="train")
    p.add_argument("--variant", choices=("full", "focused"), default="full")
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--cols", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_dump_ppm)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ds.DataError, ds.IdxFormatError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalAbortError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
