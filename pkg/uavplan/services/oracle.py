# uavplan/services/oracle.py
"""
Independent reference computations used to check the planners.

Nothing here calls into the planner code paths: rates, propulsion power,
feasibility and circle geometry are re-implemented directly from the model
equations so that a bug in one implementation cannot hide in both.
"""
import logging
import math
from typing import Callable, Dict, Optional

import numpy as np
from pydantic import BaseModel
from scipy.linalg import cholesky, solve_triangular
from scipy.optimize import lsq_linear

from uavplan.models.plan_model import FeasibilityReport, Trajectory
from uavplan.models.scenario_model import Scenario

logger = logging.getLogger(__name__)


class OracleReport(BaseModel):
    """Reference vs candidate comparison of one quantity"""

    quantity: str
    reference: float
    candidate: float
    abs_error: float
    rel_error: float
    tolerance: float
    passed: bool

    @classmethod
    def compare(cls, quantity: str, reference: float, candidate: float, tolerance: float,
                relative: bool = True) -> "OracleReport":
        abs_error = abs(candidate - reference)
        rel_error = abs_error / max(abs(reference), 1e-300)
        error = rel_error if relative else abs_error
        return cls(
            quantity=quantity,
            reference=reference,
            candidate=candidate,
            abs_error=abs_error,
            rel_error=rel_error,
            tolerance=tolerance,
            passed=bool(error <= tolerance),
        )


def finite_diff_gradient(f: Callable[[np.ndarray], float], x, h=None) -> np.ndarray:
    """
    Central-difference gradient of a scalar function.

    The default step is 1e-5 (1 + |x_i|) per coordinate. Coordinates whose
    samples are not finite come back as NaN and are logged.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    steps = 1e-5 * (1.0 + np.abs(x)) if h is None else np.broadcast_to(np.asarray(h, dtype=float), x.shape)
    grad = np.empty_like(x)
    with np.errstate(all="ignore"):
        for i in range(x.size):
            e = np.zeros_like(x)
            e[i] = steps[i]
            upper, lower = float(f(x + e)), float(f(x - e))
            grad[i] = (upper - lower) / (2.0 * steps[i])
    bad = ~np.isfinite(grad)
    if bad.any():
        logger.warning("Non-finite finite-difference samples at coordinates %s", np.flatnonzero(bad).tolist())
        grad[bad] = np.nan
    return grad


# Metric recomputation

def _sinr_rates(scenario: Scenario, q: np.ndarray, powers: np.ndarray) -> np.ndarray:
    gns = np.asarray(scenario.gn_positions, dtype=float)
    K, N = powers.shape
    rates = np.zeros((K, N))
    for n in range(N):
        x, y = q[n + 1]
        received = np.array([
            powers[k, n] * scenario.ref_snr / ((x - gns[k, 0]) ** 2 + (y - gns[k, 1]) ** 2 + scenario.altitude**2)
            for k in range(K)
        ])
        for k in range(K):
            sinr = received[k] / (1.0 + received.sum() - received[k])
            rates[k, n] = math.log2(1.0 + sinr)
    return rates


def _power(scenario: Scenario, v, a) -> float:
    speed = math.hypot(v[0], v[1])
    return scenario.c1 * speed**3 + scenario.c2 / speed * (1.0 + (a[0] ** 2 + a[1] ** 2) / scenario.g**2)


def recompute_metrics(scenario: Scenario, trajectory: Trajectory, powers: np.ndarray) -> Dict[str, object]:
    """Rates, average power, energy, EE and the speed / acceleration summary of a plan"""
    powers = np.asarray(powers, dtype=float)
    rates = _sinr_rates(scenario, trajectory.q, powers)
    N = powers.shape[1]
    prop = [_power(scenario, trajectory.v[n], trajectory.a[n]) for n in range(1, N + 1)]
    avg_rates = rates.sum(axis=1) / N
    bits = scenario.bandwidth * scenario.slot_len * rates.sum(axis=1).min()
    energy = scenario.slot_len * sum(prop)
    return {
        "rates": rates.tolist(),
        "avg_rate_per_gn": avg_rates.tolist(),
        "min_avg_rate": float(avg_rates.min()),
        "avg_prop_power_w": sum(prop) / N,
        "total_prop_energy_j": energy,
        "ee_bits_per_joule": bits / energy,
        "avg_speed": float(np.mean([math.hypot(*trajectory.v[n]) for n in range(1, N + 1)])),
        "avg_acceleration": float(np.mean([math.hypot(*trajectory.a[n]) for n in range(1, N + 1)])),
    }


def audit_plan(scenario: Scenario, trajectory: Trajectory, powers: np.ndarray) -> FeasibilityReport:
    """Slot-by-slot feasibility check of a Cartesian plan"""
    dt = scenario.slot_len
    q, v, a = trajectory.q, trajectory.v, trajectory.a
    N = q.shape[0] - 1
    res = dict.fromkeys(
        ["kinematics_velocity", "kinematics_position", "periodicity", "speed_low", "speed_high", "acceleration",
         "power_box"], 0.0
    )
    for n in range(1, N + 1):
        res["kinematics_velocity"] = max(res["kinematics_velocity"], float(np.hypot(*(v[n] - v[n - 1] - a[n - 1] * dt))))
        drift = q[n] - q[n - 1] - v[n - 1] * dt - 0.5 * a[n - 1] * dt * dt
        res["kinematics_position"] = max(res["kinematics_position"], float(np.hypot(*drift)))
    for first, last in ((q[0], q[N]), (v[0], v[N]), (a[0], a[N])):
        res["periodicity"] = max(res["periodicity"], float(np.hypot(*(first - last))))
    for n in range(N + 1):
        speed = math.hypot(*v[n])
        res["speed_low"] = max(res["speed_low"], scenario.v_min - speed)
        res["speed_high"] = max(res["speed_high"], speed - scenario.v_max)
        res["acceleration"] = max(res["acceleration"], math.hypot(*a[n]) - scenario.a_max)
    for p in np.asarray(powers, dtype=float).ravel():
        res["power_box"] = max(res["power_box"], -p, p - scenario.peak_power)
    scales = {
        "speed_low": scenario.v_min,
        "speed_high": scenario.v_max,
        "acceleration": scenario.a_max,
        "power_box": scenario.peak_power,
    }
    if scenario.prop_limit is not None:
        avg = sum(_power(scenario, v[n], a[n]) for n in range(1, N + 1)) / N
        res["prop_limit"] = max(0.0, avg - scenario.prop_limit)
        scales["prop_limit"] = scenario.prop_limit
    return FeasibilityReport(residuals={k: float(x) for k, x in res.items()}, scales=scales)


# Circular grid search

class CircularGridResult(BaseModel):
    """Best constant-angular-velocity circle found on a radius x start-phase grid"""

    feasible: bool
    radius: Optional[float] = None
    phase: Optional[float] = None
    omega: float
    min_rate: Optional[float] = None
    radius_step: Optional[float] = None


def brute_force_circular(scenario: Scenario, radius_points: int = 64, phase_points: int = 32) -> CircularGridResult:
    """
    Exhaustive search over full-power circles around the GN centroid.

    Periodicity pins a constant angular velocity to 2 pi / T, so the grid runs
    over the radius and the start phase in [0, 2 pi / N). The discrete circle
    has speed 2 r tan(pi / N) / dt and acceleration 4 r sin^2(pi / N) / (dt^2 cos(pi / N)).
    """
    N, dt, T = scenario.slots, scenario.slot_len, scenario.period
    omega = 2.0 * math.pi / T
    speed_per_m = 2.0 * math.tan(math.pi / N) / dt
    accel_per_m = 4.0 * math.sin(math.pi / N) ** 2 / (dt * dt * math.cos(math.pi / N))

    lo = max(scenario.v_min * T / (2 * math.pi), scenario.v_min / speed_per_m)
    hi = min(scenario.v_max * T / (2 * math.pi), scenario.a_max / omega**2,
             scenario.v_max / speed_per_m, scenario.a_max / accel_per_m)
    if lo >= hi:
        return CircularGridResult(feasible=False, omega=omega)

    gns = np.asarray(scenario.gn_positions, dtype=float)
    center = gns.mean(axis=0)
    radii = np.linspace(lo, hi, radius_points)
    phases = np.arange(phase_points) * (2 * math.pi / N) / phase_points
    best = None
    for r in radii:
        speed, accel = r * speed_per_m, r * accel_per_m
        power = scenario.c1 * speed**3 + scenario.c2 / speed * (1.0 + accel**2 / scenario.g**2)
        if scenario.prop_limit is not None and power > scenario.prop_limit:
            continue
        for phase in phases:
            angles = phase + 2 * math.pi * np.arange(N + 1) / N
            q = center[None, :] + r * np.column_stack([np.cos(angles), np.sin(angles)])
            rates = _sinr_rates(scenario, q, np.full((gns.shape[0], N), scenario.peak_power))
            value = rates.mean(axis=1).min()
            if best is None or value > best[0]:
                best = (value, r, phase)

    if best is None:
        return CircularGridResult(feasible=False, omega=omega)
    step = radii[1] - radii[0] if radius_points > 1 else 0.0
    return CircularGridResult(feasible=True, radius=best[1], phase=best[2], omega=omega, min_rate=best[0],
                              radius_step=step)


# Reference solvers

def reference_box_qp(Q: np.ndarray, c: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """
    Maximize -x'Qx/2 + c'x over lo <= x <= hi for positive definite Q.

    Rewritten as min ||R x - d||^2 / 2 with Q = R'R and R'd = c and handed to
    the bounded-variable least-squares active-set method.
    """
    R = cholesky(np.asarray(Q, dtype=float), lower=False)
    d = solve_triangular(R, np.asarray(c, dtype=float), trans="T", lower=False)
    result = lsq_linear(R, d, bounds=(lo, hi), method="bvls", tol=1e-14, max_iter=10_000)
    return result.x


def box_projection(lo, hi) -> Callable[[np.ndarray], np.ndarray]:
    return lambda x: np.clip(x, lo, hi)


def ball_projection(center, radius: float) -> Callable[[np.ndarray], np.ndarray]:
    center = np.asarray(center, dtype=float)

    def project(x: np.ndarray) -> np.ndarray:
        offset = x - center
        norm = np.linalg.norm(offset)
        return x if norm <= radius else center + offset * (radius / norm)

    return project


def projected_gradient_ascent(
    gradient: Callable[[np.ndarray], np.ndarray],
    project: Callable[[np.ndarray], np.ndarray],
    x0,
    step: float,
    max_iters: int = 100_000,
    tol: float = 1e-13,
) -> np.ndarray:
    """Accelerated projected gradient ascent for smooth concave maximization over a convex set"""
    x_prev = project(np.asarray(x0, dtype=float))
    y, momentum = x_prev.copy(), 1.0
    for _ in range(max_iters):
        x = project(y + step * gradient(y))
        next_momentum = (1.0 + math.sqrt(1.0 + 4.0 * momentum**2)) / 2.0
        y = x + ((momentum - 1.0) / next_momentum) * (x - x_prev)
        if np.linalg.norm(x - x_prev) <= tol * max(1.0, np.linalg.norm(x)):
            return x
        x_prev, momentum = x, next_momentum
    return x_prev
