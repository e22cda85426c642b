"""Command-line entry point: ``madngm <command> [flags]``.

Exit codes: 0 success, 2 config error, 3 numerical blow-up, 4 missing artifact.
"""

from __future__ import annotations

import argparse
import logging
import sys

import yaml

from . import pipeline
from .config import load_config
from .errors import (
    ConfigError,
    DegenerateSystemError,
    DivergedError,
    InstabilityError,
    MissingArtifactError,
    NumericalBlowupError,
)

EXIT_OK, EXIT_CONFIG, EXIT_BLOWUP, EXIT_MISSING = 0, 2, 3, 4

COMMANDS = ("sample-ics", "pretrain", "finetune", "evolve", "reference", "compare", "run")


def _parse_set(items):
    out = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        out[key.strip()] = yaml.safe_load(value)
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="madngm", description="Meta-auto-decoder neural Galerkin pipeline")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML file with flat dotted keys")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--jobs", type=int, help="worker processes for per-sample work")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name in ("finetune", "evolve"):
            p.add_argument("--sample", type=int, default=None, help="test sample index (default: all)")
        if name == "compare":
            p.add_argument("--no-figures", action="store_true")
    return parser


def _config(args) -> dict:
    overrides = _parse_set(args.set)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    return load_config(args.config, overrides)


def _samples(args, cfg) -> list[int]:
    if args.sample is not None:
        return [args.sample]
    return list(range(len(pipeline.load_manifest(args.out)["test"])))


def dispatch(args) -> object:
    cfg = _config(args)
    out = args.out
    cmd = args.command
    if cmd == "sample-ics":
        return pipeline.cmd_sample_ics(cfg, out)
    if cmd == "pretrain":
        return pipeline.cmd_pretrain(cfg, out)
    if cmd == "finetune":
        return [pipeline.cmd_finetune(cfg, out, k) for k in _samples(args, cfg)]
    if cmd == "evolve":
        return [pipeline.cmd_evolve(cfg, out, k) for k in _samples(args, cfg)]
    if cmd == "reference":
        return pipeline.cmd_reference(cfg, out)
    if cmd == "compare":
        return pipeline.cmd_compare(cfg, out, figures=not args.no_figures)
    return pipeline.cmd_run(cfg, out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        result = dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalBlowupError, DivergedError, DegenerateSystemError, InstabilityError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except MissingArtifactError as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    for path in result if isinstance(result, list) else [result]:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
