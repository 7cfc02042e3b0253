"""Command line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O or
file-format error.
"""

import argparse
import logging
import sys
from pathlib import Path

from . import experiment
from .config import load_config
from .errors import ConfigError, DataFormatError, NumericalError

EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 2, 3, 4

log = logging.getLogger("occid")


def _common(p):
    p.add_argument("--config", required=True, help="experiment JSON file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config field by dotted path, e.g. model.lambda=1e-4")
    p.add_argument("--out", help="output directory (default: config output_dir)")
    p.add_argument("--seed", type=int, help="master seed (overrides config seed)")
    p.add_argument("--threads", type=int, default=1, help="worker threads for Gram assembly")
    p.add_argument("--no-plots", action="store_true", help="skip figure rendering")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="occid", description="System identification with control occupation kernels.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="simulate a trajectory dataset")
    _common(p)

    p = sub.add_parser("identify", help="fit a model to a dataset")
    _common(p)
    p.add_argument("--data", help="dataset directory (default: <out>/data)")

    p = sub.add_parser("evaluate", help="compare a model with the true plant at probe points")
    _common(p)
    p.add_argument("--model", help="model file (default: <out>/model.json)")

    p = sub.add_parser("montecarlo", help="repeat generate/identify/evaluate over fresh seeds")
    _common(p)
    p.add_argument("--trials", type=int, required=True)

    p = sub.add_parser("control-demo", help="computed-torque regulation of the two-link plant")
    _common(p)
    p.add_argument("--model", default="exact", help="model file, or 'exact' (default)")
    return parser


def run(args):
    overrides = list(args.set)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    cfg = load_config(args.config, overrides)
    if args.threads < 1:
        raise ConfigError(f"--threads must be at least 1, got {args.threads}")
    out = Path(args.out or cfg.output_dir)
    plots = not args.no_plots
    if args.command == "generate":
        path = experiment.cmd_generate(cfg, out)
    elif args.command == "identify":
        path = experiment.cmd_identify(cfg, args.data or out / "data", out, threads=args.threads)
    elif args.command == "evaluate":
        path = experiment.cmd_evaluate(cfg, args.model or out / "model.json", out, plots=plots)
    elif args.command == "montecarlo":
        path = experiment.cmd_montecarlo(cfg, args.trials, out, threads=args.threads, plots=plots)
    else:
        path = experiment.cmd_control_demo(cfg, args.model, out, plots=plots)
    print(path if not isinstance(path, list) else "\n".join(map(str, path)))


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run(args)
    except (DataFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return 0


if __name__ == "__main__":
    sys.exit(main())
