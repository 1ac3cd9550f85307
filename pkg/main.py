"""
Main Entry Point for the impulse control toolkit
Subcommands:
- analyze: Kalman rank, d_A and sampled ranks of a pair
- simulate / steer-approx / steer-null / steer-ode: scenario runs
- reproduce: named reproduction scenarios with pass/fail assertions
- batch: several configs in parallel
"""

import argparse
import logging
import sys
import time
from pathlib import Path
from typing import List, Optional

# Add modules path to system path
sys.path.insert(0, str(Path(__file__).parent))

from modules.config import APP_CONFIG, load_config, load_environment
from modules.error_handler import ErrorHandler, ReproductionFailure, handle_errors
from modules.logging_config import RunAuditLogger, init_default_logging
from modules.reports import Report, write_report
from modules.runner import run_analyze, run_batch, run_reproduce, run_scenario
from modules.scenario import ScenarioConfig, known_reproduce_names, reproduce_scenario

logger = logging.getLogger(__name__)

SCENARIO_TASKS = ("simulate", "steer-approx", "steer-null", "steer-ode")


class CliArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with the validation code instead of argparse's 2."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(ErrorHandler.EXIT_CODES["validation"], f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = CliArgumentParser(
        prog=APP_CONFIG["APP_NAME"],
        description="Controllability analysis and impulse steering of coupled heat equations",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {APP_CONFIG['VERSION']}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, config_required: bool):
        p.add_argument("--config", required=config_required, help="scenario JSON document")
        p.add_argument("--out", help="write the JSON report here (default: stdout)")
        p.add_argument("--tol", type=float, help="absolute rank tolerance (default: relative policy)")
        p.add_argument("--modes", type=int, help="override the number of sine modes")
        p.add_argument("--seed", type=int, help="seed for randomized checks")

    common(sub.add_parser("analyze", help="rank tests and the critical window"), True)
    for task in SCENARIO_TASKS:
        p = sub.add_parser(task, help=f"run a {task} scenario")
        common(p, True)
        p.add_argument("--csv", help="directory for the trajectory CSV")

    p = sub.add_parser("reproduce", help="run a named reproduction scenario")
    p.add_argument("name", help=f"one of {known_reproduce_names()}")
    common(p, False)

    p = sub.add_parser("batch", help="run several configs in parallel")
    p.add_argument("configs", nargs="+", help="scenario JSON documents")
    p.add_argument("--out-dir", required=True, help="directory receiving one report per config")
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--tol", type=float)
    return parser


def _load(args: argparse.Namespace, task: str) -> ScenarioConfig:
    config = ScenarioConfig.from_dict(load_config(args.config), task=task)
    if args.seed is not None:
        config.seed = args.seed
    return config.with_modes(args.modes)


def _emit(report: Report, out: Optional[str]):
    if out:
        write_report(report, out)
        print(f"{report.task}: report written to {out}")
    else:
        print(report.to_json())


@handle_errors()
def cmd_analyze(args: argparse.Namespace) -> int:
    report = run_analyze(_load(args, "analyze"), args.tol)
    _emit(report, args.out)
    return 0


@handle_errors()
def cmd_scenario(args: argparse.Namespace) -> int:
    report = run_scenario(_load(args, args.command), args.tol, args.csv)
    _emit(report, args.out)
    return 0


@handle_errors()
def cmd_reproduce(args: argparse.Namespace) -> int:
    config = None
    params = {}
    if args.config:
        data = load_config(args.config)
        data.setdefault("reproduce", {"name": args.name})
        config = ScenarioConfig.from_dict(data, task="reproduce")
        if config.reproduce["name"] != reproduce_scenario(args.name):
            config.reproduce = {"name": args.name, "params": config.reproduce["params"]}
        params = config.reproduce["params"]
    seed = args.seed if args.seed is not None else (config.seed if config else 0)
    report = run_reproduce(args.name, params, seed=seed, modes=args.modes, config=config)
    _emit(report, args.out)
    if not report.passed:
        failed = [a["name"] for a in report.assertions if not a["passed"]]
        raise ReproductionFailure(f"{args.name}: failed assertions: {', '.join(failed)}")
    return 0


@handle_errors()
def cmd_batch(args: argparse.Namespace) -> int:
    outcomes = run_batch(args.configs, args.out_dir, args.workers, args.tol)
    for path, code in outcomes:
        print(f"{path}: exit {code}")
    return max(code for _, code in outcomes)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    init_default_logging(load_environment())
    audit = RunAuditLogger()
    source = getattr(args, "config", None) or getattr(args, "name", None) or "batch"
    audit.log_start(args.command, str(source))
    start = time.perf_counter()

    if args.command == "analyze":
        code = cmd_analyze(args)
    elif args.command in SCENARIO_TASKS:
        code = cmd_scenario(args)
    elif args.command == "reproduce":
        code = cmd_reproduce(args)
    else:
        code = cmd_batch(args)

    if code == ErrorHandler.EXIT_CODES["success"]:
        audit.log_success(args.command, str(source), time.perf_counter() - start)
    else:
        audit.log_failure(args.command, str(source), f"exit code {code}")
    return code


# ---------- Run Application ----------
if __name__ == "__main__":
    sys.exit(main())
