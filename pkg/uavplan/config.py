# uavplan/config.py
import logging
import os

from dotenv import load_dotenv

# Load a local .env before reading the environment
load_dotenv()

logger = logging.getLogger(__name__)

_LOG_LEVELS = ("CRITICAL", "ERROR", "WARNING", "INFO", "DEBUG")


class Settings:
    """Application settings loaded from environment variables"""

    # Logging
    LOG_LEVEL: str = os.environ.get("UAVPLAN_LOG", "INFO").upper()

    # CLI defaults
    OUTPUT_DIR: str = os.environ.get("UAVPLAN_OUTPUT_DIR", "runs")
    JOBS: int = int(os.environ.get("UAVPLAN_JOBS", "1"))

    # Subsolver tolerance used by the planners unless overridden on the command line
    SOLVER_TOL: float = float(os.environ.get("UAVPLAN_SOLVER_TOL", "1e-7"))

    # Bundled scenario directory
    SCENARIO_DIR: str = os.path.join(os.path.dirname(__file__), "scenarios")


# Create settings instance
settings = Settings()


def validate_settings(current: Settings = settings) -> None:
    """Validate that environment-provided settings are usable"""

    problems = []
    if current.LOG_LEVEL not in _LOG_LEVELS:
        problems.append(f"UAVPLAN_LOG={current.LOG_LEVEL!r} (expected one of {', '.join(_LOG_LEVELS)})")
    if current.JOBS < 1:
        problems.append(f"UAVPLAN_JOBS={current.JOBS} (must be >= 1)")
    if not current.SOLVER_TOL > 0:
        problems.append(f"UAVPLAN_SOLVER_TOL={current.SOLVER_TOL} (must be > 0)")

    if problems:
        raise ValueError(f"Invalid environment configuration: {'; '.join(problems)}")


def configure_logging(level: str = None) -> None:
    """Configure the root logger once, from the CLI entry point only"""
    logging.basicConfig(
        level=(level or settings.LOG_LEVEL).upper(),
        format="%(asctime)s %(levelname)-7s %(name)s: %(message)s",
    )
    logger.debug("Logging configured at %s", logging.getLevelName(logging.getLogger().level))
