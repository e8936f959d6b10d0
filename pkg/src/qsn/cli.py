"""Command-line front end.

    qsn generate|train|simulate|validate [--config FILE | --recipe NAME]
        [--set key=value]... --out DIR
    qsn recipe NAME [--out FILE]

Exit codes: 0 success / validation pass, 1 validation fail, 2 usage or
configuration error, 3 numerical failure.  Log level comes from
``QSN_LOG_LEVEL`` (default INFO).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from qsn import io, pipeline
from qsn.config import load_config, recipe, recipes
from qsn.errors import ConfigurationError, NumericalError, QSNError

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


def _common(p: argparse.ArgumentParser):
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", type=Path, help="experiment config JSON")
    src.add_argument("--recipe", choices=sorted(recipes()), help="start from a named recipe")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry, e.g. --set train.iterations=500")
    p.add_argument("--out", type=Path, required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qsn", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="integrate the two-layer L96 model")
    _common(p)

    p = sub.add_parser("train", help="fit scaler, bins and QSN on the training half")
    _common(p)
    p.add_argument("--trajectory", type=Path, help=f"reference CSV (default OUT/{pipeline.TRAJECTORY})")

    p = sub.add_parser("simulate", help="run the reduced model closed by the surrogate")
    _common(p)
    p.add_argument("--trajectory", type=Path, help="reference CSV used for the warm start")
    p.add_argument("--artifacts", type=Path, help="directory with network/scaler/bins (default OUT)")

    p = sub.add_parser("validate", help="compare test-half statistics; exit 1 on failure")
    _common(p)
    p.add_argument("--reference", type=Path, help="reference CSV")
    p.add_argument("--reduced", type=Path, help=f"reduced CSV (default OUT/{pipeline.REDUCED})")

    p = sub.add_parser("recipe", help="print (or write) a recipe's config JSON")
    p.add_argument("name", choices=sorted(recipes()))
    p.add_argument("--out", type=Path)
    return parser


def _dispatch(args) -> int:
    if args.command == "recipe":
        cfg = recipe(args.name)
        if args.out:
            cfg.save(args.out)
        else:
            print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
        return EXIT_OK

    cfg = load_config(args.config, args.recipe, args.overrides)
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)

    if args.command == "generate":
        path = pipeline.run_generate(cfg, out)
        print(path)
        return EXIT_OK

    if args.command == "train":
        traj = args.trajectory or out / pipeline.TRAJECTORY
        summary = pipeline.run_train(cfg, traj, out)
        rates = summary["misclassification"]
        print("misclassification per head: " + " ".join(f"{r:.4f}" for r in rates))
        print(f"mean misclassification: {summary['misclassification_mean']:.4f}")
        return EXIT_OK

    if args.command == "simulate":
        traj = args.trajectory or out / pipeline.TRAJECTORY
        paths = pipeline.run_simulate(cfg, traj, args.artifacts or out, out)
        for p in paths:
            print(p)
        return EXIT_OK

    if args.command == "validate":
        ref = args.reference or out / pipeline.TRAJECTORY
        red = args.reduced or out / pipeline.REDUCED
        train_manifest = out / pipeline.TRAIN_MANIFEST
        mc = io.read_json(train_manifest).get("misclassification") if train_manifest.exists() else None
        summary = pipeline.run_validate(cfg, ref, red, out, mc)
        for k, v in summary["distances"].items():
            print(f"{k:12s} {v:.4f}")
        print("PASS" if summary["passed"] else "FAIL")
        return EXIT_OK if summary["passed"] else EXIT_FAIL

    raise ConfigurationError(f"unknown command {args.command}")


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("QSN_LOG_LEVEL", "INFO").upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return _dispatch(args)
    except NumericalError as exc:
        print(f"qsn: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (QSNError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"qsn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"qsn: I/O error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
