# uavplan/main.py
import argparse
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from uavplan import __version__
from uavplan.commands.eval_commands import eval_command, verify_surrogates_command
from uavplan.commands.plan_commands import plan_command
from uavplan.config import configure_logging, settings, validate_settings
from uavplan.models.config_model import Command, RunConfig

logger = logging.getLogger(__name__)


def _plim(value: str):
    """--plim-w accepts watts or 'none'"""
    if value.lower() == "none":
        return "none"
    try:
        return float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected watts or 'none', got {value!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uavplan",
        description="UAV trajectory and power planning for multi-GN uplinks",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=None, help="Overrides UAVPLAN_LOG")
    sub = parser.add_subparsers(dest="command", required=True)

    for command in (Command.plan_minrate, Command.plan_ee, Command.baseline_circular_minrate,
                    Command.baseline_circular_ee):
        p = sub.add_parser(command.value, help=f"Run the {command.value} planner")
        p.add_argument("--scenario", required=True, help="Scenario JSON file or directory of them")
        p.add_argument("--out", default=None, help=f"Output directory (default {settings.OUTPUT_DIR})")
        p.add_argument("--max-iters", type=int, default=None,
                       help="SCA iterations per loop and circular radius/angle rounds (default 50 / 30)")
        p.add_argument("--tol", type=float, default=None, help="Relative objective change (default 1e-4)")
        p.add_argument("--plim-w", type=_plim, default=None, help="Propulsion power limit in W, or 'none'")
        p.add_argument("--seed", type=int, default=7)
        p.add_argument("--jobs", type=int, default=settings.JOBS, help="Worker processes for directory runs")

    p = sub.add_parser(Command.eval.value, help="Evaluate a stored plan")
    p.add_argument("--scenario", required=True)
    p.add_argument("--plan", required=True, help="Trajectory CSV")
    p.add_argument("--powers", required=True, help="Transmit power CSV")
    p.add_argument("--out", default=None, help="Write metrics.json here")

    p = sub.add_parser(Command.verify_surrogates.value, help="Check the surrogate bounds numerically")
    p.add_argument("--scenario", default=None)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=7)
    return parser


def to_run_config(args: argparse.Namespace) -> RunConfig:
    values = {k: v for k, v in vars(args).items() if k not in ("log_level",) and v is not None}
    if values.get("plim_w") == "none":
        values.pop("plim_w")
        values["no_plim"] = True
    return RunConfig(**values)


def main(argv: Optional[List[str]] = None) -> int:
    """CLI entry point; returns the process exit code"""
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        # argparse exits with 2 on usage errors; 2 is reserved for non-converged runs
        return 0 if e.code in (0, None) else 1

    try:
        validate_settings()
        configure_logging(args.log_level)
        config = to_run_config(args)
    except (ValueError, ValidationError) as e:
        print(f"uavplan: {e}", file=sys.stderr)
        return 1

    try:
        if config.command.is_planning:
            return plan_command(config)
        if config.command == Command.eval:
            return eval_command(config)
        return verify_surrogates_command(config)
    except Exception:
        logger.exception("Unexpected error running %s", config.command.value)
        return 1


if __name__ == "__main__":
    sys.exit(main())
