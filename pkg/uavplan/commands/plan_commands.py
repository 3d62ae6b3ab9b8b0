# uavplan/commands/plan_commands.py
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Optional, Tuple

from uavplan.config import settings
from uavplan.errors import UavPlanError
from uavplan.models.config_model import Command, RunConfig, ScaConfig
from uavplan.models.plan_model import CircularState, FlightPlan, PlanReport, PlanStatus
from uavplan.models.scenario_model import Scenario
from uavplan.services.circular import init_plan, solve_p3, solve_p4
from uavplan.services.planners import solve_ee, solve_min_rate
from uavplan.services.results_service import dump_results
from uavplan.services.scenario_service import list_scenarios, load_scenario

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NOT_CONVERGED = 2


def run_planner(command: Command, scenario: Scenario,
                cfg: ScaConfig) -> Tuple[FlightPlan, PlanReport, Optional[CircularState]]:
    """Dispatch one planning command; circular baselines also return their angular state"""
    if command == Command.plan_minrate:
        return (*solve_min_rate(scenario, init_plan(scenario, "minrate"), cfg), None)
    if command == Command.plan_ee:
        return (*solve_ee(scenario, init_plan(scenario, "ee"), cfg), None)
    if command == Command.baseline_circular_minrate:
        return solve_p3(scenario, cfg)
    if command == Command.baseline_circular_ee:
        return solve_p4(scenario, cfg)
    raise ValueError(f"{command.value} is not a planning command")


def exit_code_for(report: PlanReport) -> int:
    if not report.feasible:
        logger.error("%s plan fails the feasibility audit", report.problem)
        return EXIT_NOT_CONVERGED
    if report.status != PlanStatus.converged:
        logger.warning("%s stopped with status %s", report.problem, report.status.value)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _load(config: RunConfig, path: Path) -> Scenario:
    if config.no_plim:
        return load_scenario(path, prop_limit=None)
    if config.plim_w is not None:
        return load_scenario(path, prop_limit=config.plim_w)
    return load_scenario(path)


def plan_scenario(config: RunConfig, path: Path, outdir: Path) -> int:
    """Plan one scenario file and write its results; returns the exit code"""
    try:
        scenario = _load(config, path)
        plan, report, state = run_planner(config.command, scenario, config.sca_config())
        dump_results(scenario, plan, report, outdir, state)
    except UavPlanError as e:
        logger.error("%s: %s", path.name, e)
        return e.exit_code
    print(json.dumps({"scenario": path.stem, "problem": report.problem, "status": report.status.value,
                      **report.summary_row()}))
    return exit_code_for(report)


def plan_command(config: RunConfig) -> int:
    """
    Run a planning command on a scenario file or on every scenario of a directory

    Directory runs write to OUT/<scenario stem>/ and use up to --jobs worker
    processes; the worst exit code is returned.
    """
    out = Path(config.out or settings.OUTPUT_DIR)
    if not config.scenario.is_dir():
        return plan_scenario(config, config.scenario, out)

    try:
        paths: List[Path] = list_scenarios(config.scenario)
    except UavPlanError as e:
        logger.error("%s", e)
        return e.exit_code
    if not paths:
        logger.error("No scenario files in %s", config.scenario)
        return 1

    if config.jobs == 1:
        codes = [plan_scenario(config, path, out / path.stem) for path in paths]
    else:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            futures = [pool.submit(plan_scenario, config, path, out / path.stem) for path in paths]
            codes = [future.result() for future in futures]
    logger.info("Planned %d scenarios with exit codes %s", len(paths), codes)
    return max(codes)
