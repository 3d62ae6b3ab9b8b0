# uavplan/commands/eval_commands.py
import json
import logging
from pathlib import Path

from uavplan.config import settings
from uavplan.errors import UavPlanError
from uavplan.models.config_model import RunConfig
from uavplan.services.results_service import METRICS_FILE, evaluate_files
from uavplan.services.scenario_service import load_scenario
from uavplan.services.surrogates import surrogate_suite

logger = logging.getLogger(__name__)

DEFAULT_SCENARIO = "paper_default.json"


def eval_command(config: RunConfig) -> int:
    """Recompute metrics and the feasibility audit of a stored plan"""
    try:
        scenario = load_scenario(config.scenario)
        _, report = evaluate_files(scenario, config.plan, config.powers)
        if config.out is not None:
            config.out.mkdir(parents=True, exist_ok=True)
            (config.out / METRICS_FILE).write_text(report.model_dump_json(indent=2))
    except UavPlanError as e:
        logger.error("%s", e)
        return e.exit_code
    except OSError as e:
        logger.error("Cannot write metrics: %s", e)
        return 1

    print(json.dumps({"feasible": report.feasible, **report.summary_row(),
                      "feasibility_residuals": report.feasibility_residuals}))
    return 0 if report.feasible else 3


def verify_surrogates_command(config: RunConfig) -> int:
    """Check every surrogate family for tightness, gradient match and the global bound"""
    path = config.scenario or Path(settings.SCENARIO_DIR) / DEFAULT_SCENARIO
    try:
        scenario = load_scenario(path)
    except UavPlanError as e:
        logger.error("%s", e)
        return e.exit_code

    checks = surrogate_suite(scenario, samples=config.samples, seed=config.seed)
    for check in checks:
        print(check.model_dump_json())
    failed = [check.name for check in checks if not check.passed]
    if failed:
        logger.error("Surrogate checks failed: %s", ", ".join(failed))
        return 1
    return 0
