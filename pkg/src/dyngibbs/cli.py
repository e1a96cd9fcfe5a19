"""Command-line entry point: ``dyngibbs <kind> --config FILE [overrides]``.

Exit status is 0 on success, 2 for configuration or input errors and 3 for
failures while running.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import ConfigError, DynGibbsError, ParseError
from .harness import KINDS, SAMPLERS, ExperimentConfig, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dyngibbs", description="Run sampler convergence experiments and write error curves as CSV.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    for kind in KINDS:
        sp = sub.add_parser(kind, help=f"run a {kind} experiment")
        sp.add_argument("--config", help="key = value experiment file")
        sp.add_argument("--events", type=int, help="iteration budget per replicate")
        sp.add_argument("--sampler", choices=SAMPLERS)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output CSV path")
        sp.add_argument("--replicates", type=int)
        sp.add_argument("--threads", type=int)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = dict(
        kind=args.kind,
        budget=args.events,
        sampler=args.sampler,
        seed=args.seed,
        out=args.out,
        replicates=args.replicates,
        threads=args.threads,
    )
    try:
        if args.config:
            cfg = ExperimentConfig.from_file(args.config, **overrides)
        else:
            cfg = ExperimentConfig.from_text("", **overrides)
    except (ConfigError, ParseError) as err:
        print(f"dyngibbs: config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        res = run_experiment(cfg)
    except (ConfigError, ParseError, FileNotFoundError) as err:
        print(f"dyngibbs: config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (DynGibbsError, ArithmeticError, ValueError, MemoryError) as err:
        print(f"dyngibbs: runtime error: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    m = res.metrics
    print(f"{cfg.kind} {cfg.sampler}: {cfg.replicates} replicate(s) x {cfg.budget} iterations")
    print(f"final mean error {m['final_mean_error']:.6g}")
    for key in ("median_histogram_l1", "median_hitting_iteration", "median_estimate_disagreement"):
        if key in m:
            print(f"{key.replace('_', ' ')} {m[key]:.6g}")
    for name, path in res.outputs.items():
        print(f"{name}: {path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
