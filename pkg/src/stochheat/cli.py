"""Command line interface.

    stochheat run --experiment NAME --config FILE [--seed N] [--paths M] [--grid N] [--out DIR]
    stochheat list

Exit status: 0 pass, 1 assertion failed, 2 configuration error, 3 runtime error.
"""

import argparse
import logging
import sys

from .config import build_config, load_config
from .exceptions import ConfigError, StochHeatError

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


def _parser():
    parser = argparse.ArgumentParser(prog="stochheat",
                                     description="Stochastic heat equation experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("--experiment", help="registered experiment name")
    run.add_argument("--config", help="config file (defaults apply to missing keys)")
    run.add_argument("--seed", type=int)
    run.add_argument("--paths", type=int)
    run.add_argument("--grid", type=int, dest="n_space", help="number of spatial cells")
    run.add_argument("--out", help="output directory")
    run.add_argument("--workers", type=int)
    run.add_argument("-v", "--verbose", action="store_true")
    sub.add_parser("list", help="list the registered experiments")
    return parser


def _list():
    from .experiments import REGISTRY

    width = max(map(len, REGISTRY))
    for name, exp in REGISTRY.items():
        print(f"{name:<{width}}  {exp.description}")
    return EXIT_PASS


def _run(args):
    from .runner import run_experiment

    overrides = {"seed": args.seed, "paths": args.paths, "n_space": args.n_space,
                 "out": args.out, "workers": args.workers}
    try:
        if args.config is not None:
            cfg = load_config(args.config, args.experiment, **overrides)
        elif args.experiment is not None:
            cfg = build_config(args.experiment, {}, overrides)
        else:
            raise ConfigError("give --experiment or --config")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        manifest, result = run_experiment(cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StochHeatError, FloatingPointError, OSError, ArithmeticError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    status = "PASS" if result.passed else "FAIL"
    print(f"{cfg.name}: {status} ({manifest['duration_s']:.1f} s)")
    for key, value in result.metrics.items():
        print(f"  {key} = {value}")
    for note in result.notes:
        print(f"  note: {note}")
    return EXIT_PASS if result.passed else EXIT_FAIL


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "list":
        return _list()
    return _run(args)


if __name__ == "__main__":
    sys.exit(main())
