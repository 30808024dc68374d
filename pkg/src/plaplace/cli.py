"""Command-line driver for the experiment suite.

Subcommands: ``fidelity``, ``memorize``, ``bounds``, ``train``, ``sample``.
Each accepts ``--config <path>`` (JSON; defaults apply when omitted),
``--seed <int>`` to override the configured seed list, and ``--out <dir>``
to override the output directory.  Exit code 0 means every requested run
completed; partial failures are enumerated in ``errors.json``.
"""

from __future__ import annotations

import argparse
import copy
import logging
import sys

from .config import DEFAULT_CONFIG, load_config
from .errors import ConfigError
from .experiments import run_bounds, run_fidelity, run_memorization, sample_artifact, train_model_artifact


def _load(args) -> dict:
    if args.config is not None:
        cfg = load_config(args.config)
    else:
        cfg = copy.deepcopy(DEFAULT_CONFIG)
    if args.seed is not None:
        cfg["seeds"] = [args.seed]
    if args.out is not None:
        cfg["output_dir"] = args.out
    return cfg


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; defaults used when omitted")
    parser.add_argument("--seed", type=int, help="override: run this single seed")
    parser.add_argument("--out", help="override: output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plaplace", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in [
        ("fidelity", "estimator-vs-exact study on the analytic mixture"),
        ("memorize", "replica-injection memorization detection"),
        ("bounds", "error-bound dominance validation"),
        ("train", "train a score model and write a checkpoint"),
        ("sample", "draw reverse-time samples from a model"),
    ]:
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        if name == "sample":
            p.add_argument("--checkpoint", help="model checkpoint to sample from (trains one if omitted)")
            p.add_argument("--n", type=int, default=1000, help="number of samples")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = _load(args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if args.command == "fidelity":
        result = run_fidelity(cfg)
    elif args.command == "memorize":
        result = run_memorization(cfg)
    elif args.command == "bounds":
        result = run_bounds(cfg)
    elif args.command == "train":
        result = train_model_artifact(cfg)
    else:
        result = sample_artifact(cfg, checkpoint=args.checkpoint, n=args.n)

    if result["failed_seeds"]:
        print(f"failed seeds: {sorted(result['failed_seeds'])}", file=sys.stderr)
        return 1
    print(f"completed seeds: {result['completed_seeds']}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
