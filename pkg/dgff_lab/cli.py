"""
Command Line Module

Entry point of ``dgff-lab``. Every experiment is a subcommand; verification
experiments live under ``verify``:

    dgff-lab green --set domain=disc --set N=8,16 --seed 7
    dgff-lab verify lemma32 --seed 1
    dgff-lab run --config runs/theorem2.ini --threads 8

Settings are layered: defaults, then the ``--config`` file, then ``--set``
items and dedicated flags. Exit codes are 0 on success, 1 for invalid input,
2 when a resource cap is hit and 3 when a verification gate fails.
"""

import argparse
import logging
import sys
from typing import List, Optional

from rich.console import Console
from rich.logging import RichHandler

from dgff_lab import __version__
from dgff_lab.config import EXPERIMENTS, VERIFY_EXPERIMENTS, RunConfig, apply_overrides, load_config
from dgff_lab.errors import ConfigError, DgffLabError
from dgff_lab.experiments import run
from dgff_lab.runners import IRunner, ProgressRunner, RunnerFactory

logger = logging.getLogger("dgff_lab")

EXIT_OK = 0
EXIT_VALIDATION = 1


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", metavar="PATH", help="Configuration file (key = value with [sections])")
    common.add_argument("--seed", type=int, metavar="U64", help="Master seed")
    common.add_argument("--threads", type=int, metavar="K", help="Worker threads (1 = bit-reproducible)")
    common.add_argument("--out", metavar="DIR", help="Output directory")
    common.add_argument("--format", dest="formats", metavar="LIST", help="Comma separated subset of csv,json,svg")
    common.add_argument("--green-cap", dest="green_cap", type=int, metavar="SITES", help="Largest dense Green matrix")
    common.add_argument(
        "--set", dest="overrides", action="append", metavar="KEY=VALUE", help="Override a configuration key"
    )
    common.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    common.add_argument("-q", "--quiet", action="store_true", help="Warnings and errors only")
    return common


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subcommand per experiment."""
    common = _common_flags()
    parser = argparse.ArgumentParser(
        prog="dgff-lab",
        description="Simulation and verification lab for two-temperature overlaps of the planar DGFF and the REM.",
        parents=[common],
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    sub.add_parser("run", parents=[common], help="Run the experiment named in the configuration")
    for name in EXPERIMENTS:
        if name not in VERIFY_EXPERIMENTS:
            sub.add_parser(name, parents=[common], help=f"Run the {name} experiment")
    verify = sub.add_parser("verify", parents=[common], help="Run a verification gate")
    verify.add_argument("check", choices=VERIFY_EXPERIMENTS)
    return parser


def setup_logging(verbose: bool = False, quiet: bool = False, console: Optional[Console] = None) -> None:
    """Install a RichHandler on the package logger."""
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    handler = RichHandler(console=console or Console(stderr=True), show_path=False, rich_tracebacks=False)
    handler.setFormatter(logging.Formatter("%(message)s"))
    logger.handlers[:] = [handler]
    logger.setLevel(level)
    logger.propagate = False


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """
    Layer defaults, the configuration file and command-line overrides.

    Raises:
        ConfigError: If the result does not validate.
    """
    base = load_config(args.config) if getattr(args, "config", None) else None
    overrides: List[str] = []
    if args.command == "verify":
        overrides.append(f"experiment={args.check}")
    elif args.command != "run":
        overrides.append(f"experiment={args.command}")
    overrides.extend(getattr(args, "overrides", None) or [])
    for key in ("seed", "threads", "out", "formats", "green_cap"):
        value = getattr(args, key, None)
        if value is not None:
            overrides.append(f"{key}={value}")
    return apply_overrides(base, overrides)


def make_runner(config: RunConfig, console: Console, quiet: bool = False) -> IRunner:
    """Serial runner for one thread, pool otherwise; with a spinner on terminals."""
    return RunnerFactory.for_threads(
        config.threads,
        label=config.experiment,
        console=console,
        show_progress=console.is_terminal and not quiet,
    )


def main(argv: Optional[List[str]] = None) -> int:
    """
    Run the command line.

    Returns:
        int: Process exit code.
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    console = Console(stderr=True)
    quiet = bool(getattr(args, "quiet", False))
    setup_logging(bool(getattr(args, "verbose", False)), quiet, console)

    try:
        config = resolve_config(args)
    except ConfigError as e:
        logger.error(str(e))
        return e.exit_code

    try:
        manifest = run(config, make_runner(config, console, quiet))
    except DgffLabError as e:
        logger.error(str(e))
        return e.exit_code
    except ValueError as e:
        logger.error(str(e))
        return EXIT_VALIDATION

    if not quiet:
        console.print(
            f"[green]{config.experiment}[/green]: {len(manifest.artifact_paths)} artifacts in "
            f"[blue]{manifest.out_dir}[/blue] ({manifest.get('wall_clock_seconds', 0.0):.1f}s)"
        )
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
