# uavplan/models/__init__.py
from uavplan.models.config_model import Command, RunConfig, ScaConfig
from uavplan.models.plan_model import (
    CircularState,
    FeasibilityReport,
    FlightPlan,
    LinkPlan,
    PlanReport,
    PlanStatus,
    Trajectory,
)
from uavplan.models.scenario_model import Scenario, ScenarioSpec

__all__ = [
    "CircularState",
    "Command",
    "FeasibilityReport",
    "FlightPlan",
    "LinkPlan",
    "PlanReport",
    "PlanStatus",
    "RunConfig",
    "ScaConfig",
    "Scenario",
    "ScenarioSpec",
    "Trajectory",
]
