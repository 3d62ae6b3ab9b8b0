# uavplan/services/planners.py
"""
Outer loops of the trajectory planners.

solve_min_rate runs SCA on the min-rate problem; solve_ee wraps the same SCA
loop in Dinkelbach's method for the energy-efficiency ratio. run_sca and
run_dinkelbach are generic over the iterate type so the circular baseline
reuses them.
"""
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Generic, List, Optional, Tuple, TypeVar

import numpy as np

from uavplan.errors import InfeasiblePlanError
from uavplan.models.config_model import ScaConfig
from uavplan.models.plan_model import FlightPlan, LinkPlan, PlanReport, PlanStatus, Trajectory
from uavplan.models.scenario_model import Scenario
from uavplan.services.subproblems import build_p12, build_p23
from uavplan.services.subsolver import SolveResult, solve
from uavplan.services.system_model import (
    audit,
    channel_gains,
    evaluate_plan,
    min_bits,
    propulsion_powers,
    rate_matrix,
)

logger = logging.getLogger(__name__)

State = TypeVar("State")

# Allowed decrease of the true objective between SCA iterates before it is logged
ASCENT_SLACK = 1e-6


def recover_power(G: np.ndarray, gains: np.ndarray, peak_power: float, tol: float = 1e-8) -> np.ndarray:
    """Transmit powers p = G / h, clipped to [0, P_peak]; overshoot beyond tol is logged"""
    p = np.asarray(G, dtype=float) / np.asarray(gains, dtype=float)
    overshoot = float(p.max(initial=0.0) - peak_power)
    if overshoot > tol * peak_power:
        logger.warning("Recovered power exceeds P_peak by %.3e W; clipping", overshoot)
    return np.clip(p, 0.0, peak_power)


# Generic drivers

@dataclass
class ScaOutcome(Generic[State]):
    """Final iterate of one SCA run and its traces"""

    state: State
    objective_trace: List[float] = field(default_factory=list)
    surrogate_trace: List[float] = field(default_factory=list)
    status: PlanStatus = PlanStatus.max_iter
    iterations: int = 0


def run_sca(
    step: Callable[[State], Optional[Tuple[State, float]]],
    measure: Callable[[State], float],
    state: State,
    max_iters: int,
    rel_tol: float,
    label: str,
    magnitude: Optional[Callable[[State], float]] = None,
) -> ScaOutcome:
    """
    Iterate state <- step(state) until the true objective changes by less than
    rel_tol relative, or max_iters steps. step returns (new_state, surrogate
    optimum) or None when the subproblem could not be solved, in which case the
    last iterate is kept with status solver_failure.

    magnitude, when given, is the scale the change is measured against instead
    of the objective itself; Dinkelbach objectives sit near zero and are
    measured against the size of their two terms.
    """
    value = measure(state)
    outcome = ScaOutcome(state=state, objective_trace=[value])
    for it in range(1, max_iters + 1):
        stepped = step(state)
        if stepped is None:
            logger.warning("%s: subproblem failed at iteration %d; keeping the last iterate", label, it)
            outcome.status = PlanStatus.solver_failure
            break
        state, surrogate = stepped
        new_value = measure(state)
        if new_value < value - ASCENT_SLACK * max(1.0, abs(value)):
            logger.warning("%s: objective decreased from %.10g to %.10g", label, value, new_value)
        outcome.state = state
        outcome.objective_trace.append(new_value)
        outcome.surrogate_trace.append(surrogate)
        outcome.iterations = it
        logger.info("%s iter %d: objective %.8g (surrogate %.8g)", label, it, new_value, surrogate)
        scale = max(abs(value), magnitude(state) if magnitude is not None else 0.0, 1e-12)
        if abs(new_value - value) <= rel_tol * scale:
            outcome.status = PlanStatus.converged
            break
        value = new_value
    return outcome


@dataclass(frozen=True)
class DinkelbachState:
    """Parameter lambda_m (scaled units) and F(lambda_m) of round m"""

    lambda_m: float = 0.0
    F_m: float = float("inf")
    m: int = 0

    def evaluate(self, eta: float, mu: float) -> "DinkelbachState":
        return DinkelbachState(lambda_m=self.lambda_m, F_m=eta - self.lambda_m * mu, m=self.m)

    def converged(self, mu: float, tol: float) -> bool:
        return abs(self.F_m) <= tol * max(1.0, self.lambda_m * mu)

    def advance(self, eta: float, mu: float) -> "DinkelbachState":
        return DinkelbachState(lambda_m=eta / mu, m=self.m + 1)


@dataclass
class DinkelbachOutcome(Generic[State]):
    state: State
    objective_trace: List[float] = field(default_factory=list)
    surrogate_trace: List[float] = field(default_factory=list)
    trace_round: List[int] = field(default_factory=list)
    lambda_trace: List[float] = field(default_factory=list)
    dinkelbach_trace: List[float] = field(default_factory=list)
    status: PlanStatus = PlanStatus.max_iter
    iterations: int = 0


def run_dinkelbach(
    inner: Callable[[State, float], ScaOutcome],
    terms: Callable[[State], Tuple[float, float]],
    state: State,
    cfg: ScaConfig,
    bandwidth: float,
    label: str,
) -> DinkelbachOutcome:
    """
    Dinkelbach's method on eta(state) / mu(state) starting from lambda = 0.

    inner(state, lambda_m) maximizes eta - lambda_m mu from state; terms gives
    (eta, mu) of an iterate. lambda_trace is reported in bits/J (bandwidth times
    the scaled parameter).
    """
    dk = DinkelbachState()
    outcome = DinkelbachOutcome(state=state)
    for _ in range(cfg.max_dinkelbach_rounds):
        run = inner(state, dk.lambda_m)
        state = run.state
        outcome.state = state
        outcome.iterations += run.iterations
        outcome.objective_trace += run.objective_trace
        outcome.surrogate_trace += run.surrogate_trace
        outcome.trace_round += [dk.m] * len(run.objective_trace)

        eta, mu = terms(state)
        dk = dk.evaluate(eta, mu)
        outcome.lambda_trace.append(bandwidth * dk.lambda_m)
        outcome.dinkelbach_trace.append(dk.F_m)
        logger.info("%s round %d: lambda %.6g bits/J, F %.6g", label, dk.m, bandwidth * dk.lambda_m, dk.F_m)

        if run.status == PlanStatus.solver_failure:
            outcome.status = PlanStatus.solver_failure
            break
        if dk.converged(mu, cfg.dinkelbach_tol):
            outcome.status = PlanStatus.converged
            break
        dk = dk.advance(eta, mu)
    return outcome


# Cartesian planners

def plan_from_point(scenario: Scenario, point: dict) -> FlightPlan:
    """FlightPlan from a solved P1.2 / P2.3 point, with transmit powers recovered"""
    trajectory = Trajectory(q=point["q"], v=point["v"], a=point["a"])
    G = np.maximum(point["G"], 0.0)
    gains = channel_gains(scenario, trajectory.q[1:])
    link = LinkPlan(
        G=G,
        p=recover_power(G, gains, scenario.peak_power),
        V1=point["V1"],
        tau=float(point["tau"][0]) if "tau" in point else None,
        eta=float(point["eta"][0]) if "eta" in point else None,
    )
    return FlightPlan(trajectory=trajectory, link=link)


def min_avg_rate(scenario: Scenario, plan: FlightPlan) -> float:
    return float(rate_matrix(scenario, plan.trajectory.q, plan.link.p).mean(axis=1).min())


def ee_terms(scenario: Scenario, plan: FlightPlan) -> Tuple[float, float]:
    """(min_k sum_n R_k[n], sum_n P_prop[n]) of a plan"""
    traj = plan.trajectory
    eta = min_bits(rate_matrix(scenario, traj.q, plan.link.p))
    mu = float(propulsion_powers(scenario, traj.v[1:], traj.a[1:]).sum())
    return eta, mu


def _step(scenario: Scenario, build: Callable[[FlightPlan], object], tol: float):
    def step(plan: FlightPlan):
        sub = build(plan)
        result: SolveResult = solve(sub, tol=tol, restore_interior=True)
        if not result.usable:
            logger.warning("%s: %s (%s)", sub.name, result.status.value, result.message)
            return None
        return plan_from_point(scenario, result.point), result.objective

    return step


def _check_init(scenario: Scenario, init: FlightPlan, tol: float, problem: str) -> None:
    report = audit(scenario, init.trajectory, init.link)
    if not report.is_feasible(tol):
        bad = {k: v for k, v in report.normalized().items() if v > tol}
        raise InfeasiblePlanError(f"{problem}: initial plan is not feasible at {tol:.0e}: {bad}")


def solve_min_rate(scenario: Scenario, init: FlightPlan, cfg: ScaConfig) -> Tuple[FlightPlan, PlanReport]:
    """Maximize the minimum average rate by SCA over P1.2 from a feasible initial plan"""
    start = time.perf_counter()
    _check_init(scenario, init, max(cfg.audit_tol, 1e-4), "minrate")
    step = _step(scenario, lambda plan: build_p12(scenario, plan), cfg.solver_tol)
    run = run_sca(step, lambda plan: min_avg_rate(scenario, plan), init, cfg.max_outer_iters, cfg.rel_obj_tol,
                  "minrate")
    report = evaluate_plan(
        scenario, run.state, "minrate", cfg.audit_tol,
        status=run.status,
        objective_trace=run.objective_trace,
        surrogate_trace=run.surrogate_trace,
        trace_round=[0] * len(run.objective_trace),
        iterations=run.iterations,
        wall_time=time.perf_counter() - start,
    )
    logger.info("minrate finished (%s): min rate %.6g bits/s/Hz after %d iterations", run.status.value,
                report.min_avg_rate, run.iterations)
    return run.state, report


def solve_ee(scenario: Scenario, init: FlightPlan, cfg: ScaConfig) -> Tuple[FlightPlan, PlanReport]:
    """
    Maximize min-bits per joule by Dinkelbach's method over SCA on P2.3.

    The propulsion limit does not apply to the energy-efficiency problem and is
    dropped from the scenario for the whole run.
    """
    start = time.perf_counter()
    scenario = scenario.with_prop_limit(None)
    _check_init(scenario, init, max(cfg.audit_tol, 1e-4), "ee")

    def inner(plan: FlightPlan, lambda_m: float) -> ScaOutcome:
        step = _step(scenario, lambda p: build_p23(scenario, p, lambda_m), cfg.solver_tol)

        def measure(p: FlightPlan) -> float:
            eta, mu = ee_terms(scenario, p)
            return eta - lambda_m * mu

        def magnitude(p: FlightPlan) -> float:
            eta, mu = ee_terms(scenario, p)
            return max(eta, lambda_m * mu)

        return run_sca(step, measure, plan, cfg.max_outer_iters, cfg.rel_obj_tol, f"ee[lambda={lambda_m:.4g}]",
                       magnitude=magnitude)

    run = run_dinkelbach(inner, lambda p: ee_terms(scenario, p), init, cfg, scenario.bandwidth, "ee")
    report = evaluate_plan(
        scenario, run.state, "ee", cfg.audit_tol,
        status=run.status,
        objective_trace=run.objective_trace,
        surrogate_trace=run.surrogate_trace,
        trace_round=run.trace_round,
        lambda_trace=run.lambda_trace,
        dinkelbach_trace=run.dinkelbach_trace,
        iterations=run.iterations,
        wall_time=time.perf_counter() - start,
    )
    logger.info("ee finished (%s): %.6g bits/J after %d iterations", run.status.value, report.ee_bits_per_joule,
                run.iterations)
    return run.state, report
