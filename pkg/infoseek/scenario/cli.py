"""
Command-line interface: one subcommand per scenario.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""
import argparse
import logging
import sys
from pathlib import Path

from infoseek.core import ConfigError, InfoseekError
from infoseek.scenario.config import MODES, SCENARIOS, SCHEMES, load_config, resolve
from infoseek.scenario.output import emit_csv
from infoseek.scenario.runner import run_scenario

logger = logging.getLogger("infoseek")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class UsageParser(argparse.ArgumentParser):
    """Reports command-line mistakes with the configuration exit code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _choices(values):
    # not argparse choices: the config schema rejects bad values
    return "{" + ",".join(values) + "}"


def build_parser():
    parser = UsageParser(
        prog="infoseek",
        description=(
            "Distributed information-seeking localization and tracking simulator"
        ),
    )
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="more logging (repeatable)"
    )
    parser.add_argument("-q", "--quiet", action="store_true", help="only log errors")
    sub = parser.add_subparsers(dest="scenario", metavar="SCENARIO")
    sub.required = True
    for name in SCENARIOS:
        cmd = sub.add_parser(name, help=f"run the {name} scenario")
        cmd.add_argument(
            "--config", type=Path, help="JSON config merged onto the preset"
        )
        cmd.add_argument(
            "--mode", metavar=_choices(MODES), help="estimation/control mode"
        )
        cmd.add_argument(
            "--scheme",
            metavar=_choices(SCHEMES),
            help="control-layer processing scheme",
        )
        cmd.add_argument("--runs", type=int, help="number of Monte-Carlo runs")
        cmd.add_argument("--steps", type=int, help="time steps per run")
        cmd.add_argument("--seed", type=int, help="base random seed")
        cmd.add_argument("--j", type=int, help="estimation-layer sample count")
        cmd.add_argument(
            "--jprime", type=int, help="future measurement draws per joint sample"
        )
        cmd.add_argument("--control-j", type=int, help="control-layer sample count")
        cmd.add_argument(
            "--consensus-iters", type=int, help="average-consensus iterations R"
        )
        cmd.add_argument("--workers", type=int, help="parallel worker processes")
        cmd.add_argument(
            "--paper-scale",
            action="store_true",
            help="use full-size sample and run counts",
        )
        cmd.add_argument(
            "--out",
            type=Path,
            default=Path("out"),
            help="output directory (default: out)",
        )
    return parser


def overrides_from_args(args):
    return {
        "mode": args.mode,
        "scheme": args.scheme,
        "n_runs": args.runs,
        "n_steps": args.steps,
        "seed": args.seed,
        "workers": args.workers,
        "estimation.J": args.j,
        "control.J_prime": args.jprime,
        "control.J": args.control_j,
        "estimation.consensus_iters": args.consensus_iters,
        "control.consensus_iters": args.consensus_iters,
    }


def configure_logging(verbose, quiet):
    if quiet:
        level = logging.ERROR
    else:
        level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(verbose, 2)]
    logging.basicConfig(level=level, format=LOG_FORMAT)


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # --help exits 0, usage errors EXIT_CONFIG
        return exc.code
    configure_logging(args.verbose, args.quiet)
    overrides = overrides_from_args(args)
    try:
        if args.config is not None:
            cfg = load_config(args.config, args.paper_scale, overrides)
            if cfg.scenario != args.scenario:
                raise ConfigError(
                    f"file describes {cfg.scenario!r}, not {args.scenario!r}",
                    "scenario",
                )
        else:
            cfg = resolve({"scenario": args.scenario}, args.paper_scale, overrides)
    except ConfigError as exc:
        print(f"infoseek: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        metrics = run_scenario(cfg)
        emit_csv(metrics, args.out)
    except (InfoseekError, OSError, ValueError) as exc:
        print(f"infoseek: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if metrics.clamped:
        logger.warning("%d log-ratio entries were clamped", metrics.clamped)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
