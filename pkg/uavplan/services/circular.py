# uavplan/services/circular.py
"""
Circular-trajectory baseline and the circle initializer shared by all planners.

The circle is centred at the GN centroid. The baseline optimizes its radius
and angular profile by alternating the radius step (P3.1) and the angle step
(P3.2); the energy-efficiency variant wraps the alternation in Dinkelbach's
method.
"""
import logging
import math
import time
from typing import Literal, Optional, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from uavplan.errors import InfeasibleScenarioError
from uavplan.models.config_model import ScaConfig
from uavplan.models.plan_model import CircularState, FeasibilityReport, FlightPlan, LinkPlan, PlanReport, Trajectory
from uavplan.models.scenario_model import Scenario
from uavplan.services import surrogates
from uavplan.services.planners import ScaOutcome, recover_power, run_dinkelbach, run_sca
from uavplan.services.subproblems import build_p31, build_p32
from uavplan.services.subsolver import solve
from uavplan.services.system_model import (
    SPEED_FLOOR,
    audit,
    channel_gains,
    circular_propulsion_power,
    complete_kinematics,
    evaluate_plan,
    min_bits,
    propulsion_powers,
    rate_matrix,
    rates_from_received,
)

logger = logging.getLogger(__name__)

Kinematics = Literal["exact", "forward", "analytic"]
InitMode = Literal["minrate", "ee"]

LINE_SEARCH_POINTS = 200
LINE_SEARCH_XATOL = 0.1
# Relative shrink of the radius interval so the initial plan is strictly inside it
INTERVAL_SHRINK = 1e-4


# Geometry

def polar_data(scenario: Scenario) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Circle centre and each GN's distance zeta_k and angle phi_k around it"""
    center = scenario.centroid
    offset = scenario.gn_array - center
    return center, np.hypot(offset[:, 0], offset[:, 1]), np.arctan2(offset[:, 1], offset[:, 0])


def circle_radius_interval(scenario: Scenario) -> Tuple[float, float]:
    """
    [r_min, r_max] of a constant-speed circle flown once per period:
    V_min T / 2 pi <= r <= min(V_max T / 2 pi, a_max / omega0^2).
    """
    omega0 = 2.0 * math.pi / scenario.period
    r_min = scenario.v_min / omega0
    r_max = min(scenario.v_max / omega0, scenario.a_max / omega0**2)
    if r_min >= r_max:
        raise InfeasibleScenarioError(
            f"no feasible circle radius: r_min {r_min:.3f} m exceeds r_max {r_max:.3f} m"
        )
    return r_min, r_max


def circle_trajectory(scenario: Scenario, radius: float, phase: float = 0.0,
                      kinematics: Kinematics = "exact", center: Optional[np.ndarray] = None) -> Trajectory:
    """
    Uniform circle theta[n] = phase + 2 pi n / N.

    exact completes v and a so the discrete recurrences hold exactly, forward
    takes forward differences of positions, analytic uses the continuous-time
    derivatives r omega0 and r omega0^2.
    """
    N, dt = scenario.slots, scenario.slot_len
    center = scenario.centroid if center is None else np.asarray(center, dtype=float)
    theta = phase + 2.0 * math.pi * np.arange(N + 1) / N
    unit = np.column_stack([np.cos(theta), np.sin(theta)])
    q = center + radius * unit
    if kinematics == "exact":
        return complete_kinematics(scenario, q)
    if kinematics == "forward":
        v = np.diff(q, axis=0) / dt
        v = np.vstack([v, v[:1]])
        a = np.diff(v, axis=0) / dt
        return Trajectory(q=q, v=v, a=np.vstack([a, a[:1]]))
    if kinematics == "analytic":
        omega0 = 2.0 * math.pi / scenario.period
        tangent = np.column_stack([-np.sin(theta), np.cos(theta)])
        return Trajectory(q=q, v=radius * omega0 * tangent, a=-radius * omega0**2 * unit)
    raise ValueError(f"unknown kinematics {kinematics!r}")


def radius_interval(scenario: Scenario, kinematics: Kinematics = "exact") -> Tuple[float, float]:
    """
    Radii for which the uniform circle built with the given kinematics meets the
    speed and acceleration limits. Speed and acceleration are linear in r.
    """
    unit = circle_trajectory(scenario, 1.0, kinematics=kinematics, center=np.zeros(2))
    speed = np.linalg.norm(unit.v, axis=1)
    accel = np.linalg.norm(unit.a, axis=1)
    lo = scenario.v_min / speed.min()
    hi = scenario.v_max / speed.max()
    if accel.max() > 0:
        hi = min(hi, scenario.a_max / accel.max())
    if kinematics != "exact":
        c_lo, c_hi = circle_radius_interval(scenario)
        lo, hi = max(lo, c_lo), min(hi, c_hi)
    if lo >= hi:
        raise InfeasibleScenarioError(f"no feasible circle radius with {kinematics} kinematics: [{lo:.3f}, {hi:.3f}]")
    return float(lo), float(hi)


# Initializer

def _unit_power(scenario: Scenario, unit: Trajectory, radius: float) -> float:
    return float(propulsion_powers(scenario, radius * unit.v[1:], radius * unit.a[1:]).mean())


def _full_power_plan(scenario: Scenario, trajectory: Trajectory) -> FlightPlan:
    p = np.full((scenario.num_gns, scenario.slots), scenario.peak_power)
    G = p * channel_gains(scenario, trajectory.q[1:])
    rates = rate_matrix(scenario, trajectory.q, p)
    link = LinkPlan(G=G, p=p, V1=trajectory.speed[1:], tau=float(rates.mean(axis=1).min()), eta=min_bits(rates))
    return FlightPlan(trajectory=trajectory, link=link)


def line_search_radius(scenario: Scenario, mode: InitMode = "minrate", kinematics: Kinematics = "exact") -> float:
    """
    Radius of the initial circle: log-spaced scan of the feasible interval,
    refined by bounded scalar minimization between the best point's feasible
    neighbours. minrate mode maximizes the full-power min average rate under the
    propulsion limit; ee mode maximizes min-bits per joule and ignores it.
    """
    lo, hi = radius_interval(scenario, kinematics)
    lo, hi = lo * (1.0 + INTERVAL_SHRINK), hi * (1.0 - INTERVAL_SHRINK)
    unit = circle_trajectory(scenario, 1.0, kinematics=kinematics, center=np.zeros(2))
    center = scenario.centroid
    p = np.full((scenario.num_gns, scenario.slots), scenario.peak_power)

    def feasible(r: float) -> bool:
        if mode == "ee" or scenario.prop_limit is None:
            return True
        return _unit_power(scenario, unit, r) <= scenario.prop_limit

    def score(r: float) -> float:
        rates = rate_matrix(scenario, center + r * unit.q, p)
        if mode == "minrate":
            return float(rates.mean(axis=1).min())
        return min_bits(rates) / float(propulsion_powers(scenario, r * unit.v[1:], r * unit.a[1:]).sum())

    radii = np.geomspace(lo, hi, LINE_SEARCH_POINTS)
    ok = np.array([feasible(r) for r in radii])
    if not ok.any():
        raise InfeasibleScenarioError(
            f"propulsion limit {scenario.prop_limit} W is below the power of every feasible circle"
        )
    scores = np.array([score(r) if good else -np.inf for r, good in zip(radii, ok)])
    i = int(scores.argmax())
    best_r, best = float(radii[i]), float(scores[i])

    left = radii[i - 1] if i > 0 and ok[i - 1] else radii[i]
    right = radii[i + 1] if i + 1 < radii.size and ok[i + 1] else radii[i]
    if right > left:
        refined = minimize_scalar(lambda r: -score(r), bounds=(left, right), method="bounded",
                                  options={"xatol": LINE_SEARCH_XATOL})
        if refined.success and feasible(refined.x) and -refined.fun > best:
            best_r, best = float(refined.x), float(-refined.fun)
    logger.info("Initial circle (%s, %s kinematics): r = %.3f m, score %.6g", mode, kinematics, best_r, best)
    return best_r


def init_plan(scenario: Scenario, mode: InitMode = "minrate", kinematics: Kinematics = "exact") -> FlightPlan:
    """Full-power uniform circle at omega0 = 2 pi / T with the line-searched radius"""
    radius = line_search_radius(scenario, mode, kinematics)
    return _full_power_plan(scenario, circle_trajectory(scenario, radius, kinematics=kinematics))


def optimum_radius_plan(scenario: Scenario, cfg: ScaConfig) -> Tuple[FlightPlan, PlanReport]:
    """'Circle with optimum radius' baseline: the analytic-kinematics initializer, reported as is"""
    start = time.perf_counter()
    state = circular_state_from_radius(scenario, line_search_radius(scenario, "minrate", "analytic"))
    plan, report = circular_report(scenario, state, "circular_optimum_r", cfg.audit_tol, status="converged",
                                   objective_trace=[_min_rate(state)])
    return plan, report.model_copy(update={"wall_time": time.perf_counter() - start})


# Circular state

def circular_state_from_radius(scenario: Scenario, radius: float) -> CircularState:
    """Constant omega0 profile starting at angle 0 with full-power received powers"""
    N = scenario.slots
    center, zeta, phi = polar_data(scenario)
    omega0 = 2.0 * math.pi / scenario.period
    theta = 2.0 * math.pi * np.arange(N + 1) / N
    S = surrogates.smax(scenario, radius, theta[None, 1:], zeta[:, None], phi[:, None])
    return CircularState(
        center=center, radius=radius, theta=theta, omega=np.full(N + 1, omega0), alpha=np.zeros(N + 1),
        zeta=zeta, phi=phi, S=S,
    )


def circular_state_from_profile(scenario: Scenario, radius: float, theta, omega, alpha,
                                p: np.ndarray) -> CircularState:
    """State of a stored circular plan; received powers follow from the transmit powers"""
    center, zeta, phi = polar_data(scenario)
    theta = np.asarray(theta, dtype=float)
    S = np.asarray(p, dtype=float) * surrogates.smax(scenario, radius, theta[None, 1:], zeta[:, None],
                                                     phi[:, None]) / scenario.peak_power
    return CircularState(center=center, radius=radius, theta=theta, omega=omega, alpha=alpha, zeta=zeta, phi=phi,
                         S=S)


def to_flight_plan(scenario: Scenario, state: CircularState) -> FlightPlan:
    """Cartesian plan with continuous-time velocity and acceleration, p = S / h"""
    r, theta, omega, alpha = state.radius, state.theta, state.omega, state.alpha
    radial = np.column_stack([np.cos(theta), np.sin(theta)])
    tangent = np.column_stack([-np.sin(theta), np.cos(theta)])
    q = state.center + r * radial
    v = (r * omega)[:, None] * tangent
    a = (r * alpha)[:, None] * tangent - (r * omega**2)[:, None] * radial
    trajectory = Trajectory(q=q, v=v, a=a)
    gains = channel_gains(scenario, q[1:])
    p = recover_power(state.S, gains, scenario.peak_power)
    return FlightPlan(trajectory=trajectory, link=LinkPlan(G=p * gains, p=p))


def audit_circular(scenario: Scenario, state: CircularState) -> FeasibilityReport:
    """Residuals of the angular kinematics, angular-speed box, acceleration, propulsion and received-power bounds"""
    dt = scenario.slot_len
    r, theta, omega, alpha = state.radius, state.theta, state.omega, state.alpha
    kin = max(
        float(np.abs(omega[1:] - omega[:-1] - alpha[:-1] * dt).max()),
        float(np.abs(theta[1:] - theta[:-1] - omega[:-1] * dt - 0.5 * alpha[:-1] * dt**2).max()),
        abs(theta[-1] - theta[0] - 2.0 * math.pi), abs(omega[-1] - omega[0]), abs(alpha[-1] - alpha[0]),
    )
    w_min, w_max = scenario.v_min / r, scenario.v_max / r
    accel = r * np.sqrt(alpha**2 + omega**4)
    s_max = surrogates.smax(scenario, r, theta[None, 1:], state.zeta[:, None], state.phi[:, None])
    residuals = {
        "angular_kinematics": kin,
        "omega_low": float(max(0.0, (w_min - omega).max())),
        "omega_high": float(max(0.0, (omega - w_max).max())),
        "acceleration": float(max(0.0, (accel - scenario.a_max).max())),
        "received_power": float(max(0.0, (-state.S).max(), (state.S - s_max).max())),
    }
    scales = {
        "omega_low": w_min,
        "omega_high": w_max,
        "acceleration": scenario.a_max,
        "received_power": scenario.peak_power * scenario.ref_snr / scenario.altitude**2,
    }
    if scenario.prop_limit is not None:
        omega_c = np.maximum(omega[1:], SPEED_FLOOR / r)
        avg = float(circular_propulsion_power(scenario, r, omega_c, alpha[1:]).mean())
        residuals["prop_limit"] = max(0.0, avg - scenario.prop_limit)
        scales["prop_limit"] = scenario.prop_limit
    return FeasibilityReport(residuals=residuals, scales=scales)


def circular_report(scenario: Scenario, state: CircularState, problem: str, audit_tol: float, **fields):
    """Evaluate the Cartesian reconstruction; feasibility comes from the angular audit"""
    plan = to_flight_plan(scenario, state)
    circ = audit_circular(scenario, state)
    report = evaluate_plan(scenario, plan, problem, audit_tol, feasibility=circ, **fields)
    cartesian = audit(scenario, plan.trajectory, plan.link).residuals
    residuals = {**circ.residuals, **{f"cartesian_{k}": v for k, v in cartesian.items()}}
    return plan, report.model_copy(update={"feasibility_residuals": residuals})


# Alternating steps

def _min_rate(state: CircularState) -> float:
    return float(rates_from_received(state.S).mean(axis=1).min())


def _ee_terms(scenario: Scenario, state: CircularState) -> Tuple[float, float]:
    eta = min_bits(rates_from_received(state.S))
    mu = float(circular_propulsion_power(scenario, state.radius, state.omega[1:], state.alpha[1:]).sum())
    return eta, mu


def solve_p31(scenario: Scenario, state: CircularState, lambda_m: Optional[float] = None,
              tol: float = 1e-7) -> Tuple[CircularState, Optional[float]]:
    """Radius step; returns the updated state and the surrogate optimum, or (state, None) when it fails"""
    result = solve(build_p31(scenario, state, lambda_m), tol=tol, restore_interior=True)
    if not result.usable:
        logger.warning("p31: %s (%s)", result.status.value, result.message)
        return state, None
    point = result.point
    return state.replace(radius=float(point["r"][0]), S=np.maximum(point["S"], 0.0)), result.objective


def solve_p32(scenario: Scenario, state: CircularState, lambda_m: Optional[float] = None,
              tol: float = 1e-7) -> Tuple[CircularState, Optional[float]]:
    """Angle step; returns the updated state and the surrogate optimum, or (state, None) when it fails"""
    result = solve(build_p32(scenario, state, lambda_m), tol=tol, restore_interior=True)
    if not result.usable:
        logger.warning("p32: %s (%s)", result.status.value, result.message)
        return state, None
    point = result.point
    updated = state.replace(
        theta=point["theta"], omega=point["omega"], alpha=point["alpha"], S=np.maximum(point["S"], 0.0),
    )
    return updated, result.objective


def _alternation(scenario: Scenario, lambda_m: Optional[float], tol: float):
    """One round: radius step then angle step; a failed step is skipped, two failures end the run"""

    def step(state: CircularState):
        state, radius_value = solve_p31(scenario, state, lambda_m, tol)
        state, angle_value = solve_p32(scenario, state, lambda_m, tol)
        if radius_value is None and angle_value is None:
            return None
        return state, angle_value if angle_value is not None else radius_value

    return step


def solve_p3(scenario: Scenario, cfg: ScaConfig,
             init: Optional[CircularState] = None) -> Tuple[FlightPlan, PlanReport, CircularState]:
    """Circular min-rate baseline: alternate the radius and angle steps until the min rate settles"""
    start = time.perf_counter()
    state = init or circular_state_from_radius(scenario, line_search_radius(scenario, "minrate", "analytic"))
    run: ScaOutcome = run_sca(_alternation(scenario, None, cfg.solver_tol), _min_rate, state,
                              cfg.max_alternations, cfg.rel_obj_tol, "circular-minrate")
    plan, report = circular_report(
        scenario, run.state, "circular_minrate", cfg.audit_tol,
        status=run.status,
        objective_trace=run.objective_trace,
        surrogate_trace=run.surrogate_trace,
        trace_round=[0] * len(run.objective_trace),
        iterations=run.iterations,
        wall_time=time.perf_counter() - start,
    )
    return plan, report, run.state


def solve_p4(scenario: Scenario, cfg: ScaConfig,
             init: Optional[CircularState] = None) -> Tuple[FlightPlan, PlanReport, CircularState]:
    """Circular energy-efficiency baseline: Dinkelbach rounds around the alternation; no propulsion limit"""
    start = time.perf_counter()
    scenario = scenario.with_prop_limit(None)
    state = init or circular_state_from_radius(scenario, line_search_radius(scenario, "ee", "analytic"))

    def inner(current: CircularState, lambda_m: float) -> ScaOutcome:
        def measure(s: CircularState) -> float:
            eta, mu = _ee_terms(scenario, s)
            return eta - lambda_m * mu

        def magnitude(s: CircularState) -> float:
            eta, mu = _ee_terms(scenario, s)
            return max(eta, lambda_m * mu)

        return run_sca(_alternation(scenario, lambda_m, cfg.solver_tol), measure, current,
                       cfg.max_alternations, cfg.rel_obj_tol, f"circular-ee[lambda={lambda_m:.4g}]",
                       magnitude=magnitude)

    run = run_dinkelbach(inner, lambda s: _ee_terms(scenario, s), state, cfg, scenario.bandwidth, "circular-ee")
    plan, report = circular_report(
        scenario, run.state, "circular_ee", cfg.audit_tol,
        status=run.status,
        objective_trace=run.objective_trace,
        surrogate_trace=run.surrogate_trace,
        trace_round=run.trace_round,
        lambda_trace=run.lambda_trace,
        dinkelbach_trace=run.dinkelbach_trace,
        iterations=run.iterations,
        wall_time=time.perf_counter() - start,
    )
    return plan, report, run.state
