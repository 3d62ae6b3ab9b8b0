# uavplan/models/config_model.py
from enum import Enum
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, Field, model_validator

from uavplan.config import settings


class ScaConfig(BaseModel):
    """Stopping rules and tolerances shared by every planner"""

    max_outer_iters: int = Field(50, gt=0, description="SCA iterations per inner loop")
    rel_obj_tol: float = Field(1e-4, gt=0, description="Relative objective change that stops SCA")
    dinkelbach_tol: float = Field(1e-3, gt=0, description="|F(lambda)| <= tol * max(1, lambda * mu) stops Dinkelbach")
    max_dinkelbach_rounds: int = Field(20, gt=0)
    max_alternations: int = Field(30, gt=0, description="Radius/angle rounds of the circular baseline")
    solver_tol: float = Field(default_factory=lambda: settings.SOLVER_TOL, gt=0, description="Subsolver KKT tolerance")
    audit_tol: float = Field(1e-5, gt=0, description="Feasibility tolerance for plans entering and leaving a planner")
    seed: int = Field(7, ge=0)


class Command(str, Enum):
    """CLI sub-commands"""
    plan_minrate = "plan-minrate"
    plan_ee = "plan-ee"
    baseline_circular_minrate = "baseline-circular-minrate"
    baseline_circular_ee = "baseline-circular-ee"
    eval = "eval"
    verify_surrogates = "verify-surrogates"

    @property
    def is_planning(self) -> bool:
        return self not in (Command.eval, Command.verify_surrogates)


class RunConfig(BaseModel):
    """One CLI invocation, validated before any work starts"""

    command: Command
    scenario: Optional[Path] = Field(None, description="Scenario JSON file or directory of them")
    out: Optional[Path] = Field(None, description="Output directory")
    plan: Optional[Path] = Field(None, description="Trajectory CSV for eval")
    powers: Optional[Path] = Field(None, description="Power CSV for eval")
    max_iters: Optional[int] = Field(None, gt=0)
    tol: Optional[float] = Field(None, gt=0)
    plim_w: Optional[float] = Field(None, gt=0, description="Override of the propulsion power limit, W")
    no_plim: bool = Field(False, description="Drop the propulsion power limit")
    seed: int = Field(7, ge=0)
    jobs: int = Field(1, ge=1)
    samples: int = Field(10_000, gt=0)

    @model_validator(mode="after")
    def _check_required(self) -> "RunConfig":
        if self.command.is_planning and self.scenario is None:
            raise ValueError(f"{self.command.value} requires --scenario")
        if self.command == Command.eval and (self.scenario is None or self.plan is None or self.powers is None):
            raise ValueError("eval requires --scenario, --plan and --powers")
        if self.no_plim and self.plim_w is not None:
            raise ValueError("--plim-w cannot be both a value and 'none'")
        return self

    def sca_config(self) -> ScaConfig:
        """Planner settings with the CLI overrides applied"""
        overrides = {"seed": self.seed}
        if self.max_iters is not None:
            # one budget for the SCA loop and the circular radius/angle rounds
            overrides["max_outer_iters"] = self.max_iters
            overrides["max_alternations"] = self.max_iters
        if self.tol is not None:
            overrides["rel_obj_tol"] = self.tol
        return ScaConfig(**overrides)
