# uavplan/models/plan_model.py
from enum import Enum
from typing import ClassVar, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


def _frozen_array(value, ndim: int) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


class Trajectory(BaseModel):
    """Per-slot position, velocity and acceleration for slots 0..N"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    q: np.ndarray = Field(..., description="Positions (N+1, 2), m")
    v: np.ndarray = Field(..., description="Velocities (N+1, 2), m/s")
    a: np.ndarray = Field(..., description="Accelerations (N+1, 2), m/s^2")

    @field_validator("q", "v", "a", mode="before")
    @classmethod
    def _as_array(cls, value):
        return _frozen_array(value, 2)

    @model_validator(mode="after")
    def _check_shapes(self) -> "Trajectory":
        if self.q.shape[1] != 2 or self.q.shape != self.v.shape or self.q.shape != self.a.shape:
            raise ValueError(f"q, v, a must share shape (N+1, 2); got {self.q.shape}, {self.v.shape}, {self.a.shape}")
        return self

    @property
    def slots(self) -> int:
        return self.q.shape[0] - 1

    @property
    def speed(self) -> np.ndarray:
        return np.linalg.norm(self.v, axis=1)


class LinkPlan(BaseModel):
    """Per-slot, per-GN received-power variables and recovered transmit powers (slots 1..N)"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    G: np.ndarray = Field(..., description="Received SNR-scaled power (K, N)")
    p: np.ndarray = Field(..., description="Transmit power (K, N), W")
    V1: Optional[np.ndarray] = Field(None, description="Speed slack (N,), m/s")
    tau: Optional[float] = Field(None, description="Min-rate epigraph value, bits/s/Hz")
    eta: Optional[float] = Field(None, description="Min-bits epigraph value, bits")

    @field_validator("G", "p", mode="before")
    @classmethod
    def _as_matrix(cls, value):
        return _frozen_array(value, 2)

    @field_validator("V1", mode="before")
    @classmethod
    def _as_vector(cls, value):
        return None if value is None else _frozen_array(value, 1)

    @model_validator(mode="after")
    def _check_shapes(self) -> "LinkPlan":
        if self.G.shape != self.p.shape:
            raise ValueError(f"G and p must share shape (K, N); got {self.G.shape} and {self.p.shape}")
        return self


class FlightPlan(BaseModel):
    """A complete candidate: trajectory plus link plan"""

    model_config = ConfigDict(frozen=True)

    trajectory: Trajectory
    link: LinkPlan


class CircularState(BaseModel):
    """Circle around the GN centroid with an angular profile and received powers"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    center: np.ndarray = Field(..., description="Circle centre (2,), m")
    radius: float = Field(..., gt=0, description="m")
    theta: np.ndarray = Field(..., description="Angles theta[0..N], rad")
    omega: np.ndarray = Field(..., description="Angular velocities omega[0..N], rad/s")
    alpha: np.ndarray = Field(..., description="Angular accelerations alpha[0..N], rad/s^2")
    zeta: np.ndarray = Field(..., description="GN distance from the centre (K,), m")
    phi: np.ndarray = Field(..., description="GN angle around the centre (K,), rad")
    S: np.ndarray = Field(..., description="Received powers (K, N), slots 1..N")

    @field_validator("center", "theta", "omega", "alpha", "zeta", "phi", mode="before")
    @classmethod
    def _as_vector(cls, value):
        return _frozen_array(value, 1)

    @field_validator("S", mode="before")
    @classmethod
    def _as_matrix(cls, value):
        return _frozen_array(value, 2)

    def replace(self, **changes) -> "CircularState":
        """Validated copy with some fields replaced"""
        return CircularState(**{**dict(self), **changes})


class FeasibilityReport(BaseModel):
    """Named maximum constraint violations of a plan (absolute units)"""

    model_config = ConfigDict(frozen=True)

    residuals: Dict[str, float] = Field(default_factory=dict)
    scales: Dict[str, float] = Field(default_factory=dict, description="Limit each residual is measured against")

    # Residuals compared in absolute units (metres, m/s); everything else is relative
    ABSOLUTE: ClassVar[Tuple[str, ...]] = (
        "kinematics_position", "kinematics_velocity", "periodicity", "angular_kinematics",
    )

    def normalized(self) -> Dict[str, float]:
        out = {}
        for name, value in self.residuals.items():
            scale = 1.0 if name in self.ABSOLUTE else max(self.scales.get(name, 1.0), 1e-300)
            out[name] = value / scale
        return out

    def worst(self) -> float:
        values = self.normalized().values()
        return max(values) if values else 0.0

    def is_feasible(self, eps: float) -> bool:
        """True iff every (normalized) residual is at most eps"""
        return all(value <= eps for value in self.normalized().values())


class PlanStatus(str, Enum):
    """Outcome of a planner run"""
    converged = "converged"
    max_iter = "max_iter"
    solver_failure = "solver_failure"


class PlanReport(BaseModel):
    """Metrics, traces and audit attached to every emitted plan"""

    problem: str = Field(..., description="Which planner produced the plan")
    status: PlanStatus = PlanStatus.converged
    objective_trace: List[float] = Field(default_factory=list)
    surrogate_trace: List[float] = Field(default_factory=list, description="Subproblem optimal values")
    trace_round: List[int] = Field(default_factory=list, description="Dinkelbach round of each objective_trace entry")
    lambda_trace: List[float] = Field(default_factory=list, description="Dinkelbach parameter, bits/J")
    dinkelbach_trace: List[float] = Field(default_factory=list, description="F(lambda_m), scaled units")
    rates: List[List[float]] = Field(default_factory=list, description="R_k[n], bits/s/Hz, slots 1..N")
    avg_rate_per_gn: List[float] = Field(default_factory=list)
    min_avg_rate: float = 0.0
    avg_prop_power_w: float = 0.0
    total_prop_energy_j: float = 0.0
    ee_bits_per_joule: float = 0.0
    avg_speed: float = 0.0
    avg_acceleration: float = 0.0
    feasibility_residuals: Dict[str, float] = Field(default_factory=dict)
    feasible: bool = True
    iterations: int = 0
    wall_time: float = 0.0

    def summary_row(self) -> Dict[str, float]:
        """Average speed / acceleration / min rate / power / EE, in one row"""
        return {
            "avg_speed_mps": self.avg_speed,
            "avg_accel_mps2": self.avg_acceleration,
            "min_avg_rate_bps_hz": self.min_avg_rate,
            "avg_power_w": self.avg_prop_power_w,
            "ee_kbits_per_joule": self.ee_bits_per_joule / 1e3,
        }
