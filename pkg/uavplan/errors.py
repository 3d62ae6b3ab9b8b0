# uavplan/errors.py
"""Exception hierarchy; every error carries the CLI exit code it maps to."""


class UavPlanError(Exception):
    """Base class for all planner errors"""

    exit_code: int = 1


class ScenarioValidationError(UavPlanError):
    """Scenario file violates the schema or the physical invariants"""

    exit_code = 1


class InfeasibleScenarioError(UavPlanError):
    """No plan satisfying the flight limits exists for the initializer"""

    exit_code = 3


class InfeasiblePlanError(UavPlanError):
    """A candidate plan handed to a planner or builder violates its constraints"""

    exit_code = 3


class SolverPreconditionError(UavPlanError):
    """Warm start handed to the subsolver is not strictly feasible"""

    exit_code = 1

    def __init__(self, message: str, constraint: str = None):
        super().__init__(message)
        self.constraint = constraint

