"""``spde`` command line entry point.

Exit codes: 0 when every criterion passes, 1 on a criterion failure,
2 on configuration or runtime errors.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, parse_text
from .experiments import ExperimentError, RUNNERS, run_negative_control
from .io import OutputError, write_outputs

SUBCOMMANDS = {name: name for name in RUNNERS}
SUBCOMMANDS["negative-control"] = "contract"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spde", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", required=True, help="configuration file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, help="override noise.seed")
        p.add_argument("--paths", type=int, help="override experiment.paths")
        p.add_argument("--threads", type=int, default=1, help="worker threads (output is unchanged)")
        p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    return parser


def load(args) -> "RunConfig":  # noqa: F821
    from pathlib import Path
    kind = SUBCOMMANDS[args.command]
    path = Path(args.config)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    cfg = parse_text(path.read_text(), source=str(path), kind=kind)
    over = {}
    if args.seed is not None:
        over["noise__seed"] = args.seed
    if args.paths is not None:
        over["experiment__paths"] = args.paths
    return cfg.with_overrides(**over) if over else cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load(args)
        if args.command == "negative-control":
            report = run_negative_control(cfg, threads=args.threads)
        else:
            report = RUNNERS[cfg.kind](cfg, threads=args.threads)
        write_outputs(report, cfg, args.out, figures=not args.no_figures)
    except (ConfigError, ExperimentError, OutputError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for line in report.lines():
        print(line)
    print(f"{'PASS' if report.passed else 'FAIL'} {args.command} ({report.scope}); "
          f"config hash {cfg.hash[:12]}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
