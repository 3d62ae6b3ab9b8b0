# uavplan/services/system_model.py
"""
Channel, rate, propulsion and kinematics model of the UAV uplink, plus the
feasibility audit every planner output goes through.
"""
import logging
from typing import Dict, Optional

import numpy as np

from uavplan.models.plan_model import FeasibilityReport, FlightPlan, LinkPlan, PlanReport, PlanStatus, Trajectory
from uavplan.models.scenario_model import Scenario

logger = logging.getLogger(__name__)

# Speed (m/s) the propulsion audit uses in place of zero
SPEED_FLOOR = 1e-6


# Channel and rates

def channel_gain(scenario: Scenario, q_n: np.ndarray, k: int) -> float:
    """LoS gain h_k = gamma0 / (||q - w_k||^2 + H^2) of GN k at horizontal position q_n"""
    if not 0 <= k < scenario.num_gns:
        raise IndexError(f"GN index {k} out of range for {scenario.num_gns} GNs")
    offset = np.asarray(q_n, dtype=float) - scenario.gn_array[k]
    return scenario.ref_snr / (offset @ offset + scenario.altitude**2)


def channel_gains(scenario: Scenario, q: np.ndarray) -> np.ndarray:
    """Gains of every GN at every position; q is (M, 2), result is (K, M)"""
    q = np.atleast_2d(np.asarray(q, dtype=float))
    dist_sq = ((q[None, :, :] - scenario.gn_array[:, None, :]) ** 2).sum(axis=2)
    return scenario.ref_snr / (dist_sq + scenario.altitude**2)


def instantaneous_rate(scenario: Scenario, gains: np.ndarray, powers: np.ndarray, k: int) -> float:
    """Rate of GN k in bits/s/Hz when every other GN is treated as interference"""
    received = np.asarray(powers, dtype=float) * np.asarray(gains, dtype=float)
    interference = received.sum() - received[k]
    return float(np.log2(1.0 + received[k] / (1.0 + interference)))


def rates_from_received(G: np.ndarray) -> np.ndarray:
    """Per-GN rates from received powers (K, N) via log2(1 + sum G) - log2(1 + sum_{j!=k} G_j)"""
    G = np.asarray(G, dtype=float)
    total = G.sum(axis=0, keepdims=True)
    return np.log2(1.0 + total) - np.log2(1.0 + total - G)


def rate_matrix(scenario: Scenario, q: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Rates R_k[n] for slots 1..N given positions q[0..N] and powers p (K, N)"""
    gains = channel_gains(scenario, np.asarray(q)[1:])
    return rates_from_received(np.asarray(p) * gains)


def min_bits(rates: np.ndarray) -> float:
    """min_k sum_n R_k[n] (bits/Hz per slot-second; multiply by W * dt for bits)"""
    return float(np.asarray(rates).sum(axis=1).min())


# Propulsion

def propulsion_power(scenario: Scenario, v_n: np.ndarray, a_n: np.ndarray) -> float:
    """Fixed-wing power c1 ||v||^3 + (c2 / ||v||)(1 + ||a||^2 / g^2), W"""
    speed = float(np.linalg.norm(v_n))
    if speed <= 0.0:
        raise ValueError("propulsion power is undefined at zero speed")
    accel_sq = float(np.dot(a_n, a_n))
    return scenario.c1 * speed**3 + scenario.c2 / speed * (1.0 + accel_sq / scenario.g**2)


def propulsion_powers(scenario: Scenario, v: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Vectorized propulsion power over rows of v and a"""
    speed = np.linalg.norm(v, axis=1)
    if np.any(speed <= 0.0):
        raise ValueError("propulsion power is undefined at zero speed")
    return _power_at(scenario, speed, a)


def _power_at(scenario: Scenario, speed: np.ndarray, a: np.ndarray) -> np.ndarray:
    accel_sq = (np.asarray(a) ** 2).sum(axis=1)
    return scenario.c1 * speed**3 + scenario.c2 / speed * (1.0 + accel_sq / scenario.g**2)


def circular_propulsion_power(scenario: Scenario, r, omega, alpha=0.0) -> np.ndarray:
    """Propulsion power on a circle of radius r with angular velocity omega and angular acceleration alpha"""
    c1, c2, g2 = scenario.c1, scenario.c2, scenario.g**2
    omega = np.asarray(omega, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    return c1 * r**3 * omega**3 + c2 / (r * omega) + c2 * r * omega**3 / g2 + c2 * r * alpha**2 / (g2 * omega)


def min_power_speed(scenario: Scenario) -> float:
    """Speed minimizing level-flight power, (c2 / (3 c1))^(1/4)"""
    return (scenario.c2 / (3.0 * scenario.c1)) ** 0.25


# Kinematics

def propagate(scenario: Scenario, q0: np.ndarray, v0: np.ndarray, a: np.ndarray) -> Trajectory:
    """
    Roll the discrete kinematics forward from (q0, v0) under accelerations a[0..N-1].

    Periodicity is not enforced; a[N] is set equal to a[0].
    """
    dt = scenario.slot_len
    a = np.asarray(a, dtype=float).reshape(-1, 2)
    steps = a.shape[0]
    q = np.empty((steps + 1, 2))
    v = np.empty((steps + 1, 2))
    q[0], v[0] = q0, v0
    for n in range(1, steps + 1):
        v[n] = v[n - 1] + a[n - 1] * dt
        q[n] = q[n - 1] + v[n - 1] * dt + 0.5 * a[n - 1] * dt**2
    return Trajectory(q=q, v=v, a=np.vstack([a, a[:1]]))


def complete_kinematics(scenario: Scenario, q: np.ndarray) -> Trajectory:
    """
    Velocities and accelerations that make periodic positions q[0..N] satisfy
    the discrete recurrences exactly.

    Eliminating a gives v[n] + v[n-1] = 2 (q[n] - q[n-1]) / dt with v[N] = v[0],
    a circulant system; for even N it has an alternating null mode and the
    minimum-norm solution is returned.
    """
    q = np.asarray(q, dtype=float)
    N = q.shape[0] - 1
    dt = scenario.slot_len
    steps = np.diff(q, axis=0)

    system = np.eye(N) + np.roll(np.eye(N), 1, axis=1)
    # Row n-1 couples v[n-1] and v[n mod N]
    v_head, *_ = np.linalg.lstsq(system, 2.0 * steps / dt, rcond=None)

    v = np.vstack([v_head, v_head[:1]])
    a_head = 2.0 * (steps - dt * v_head) / dt**2
    a = np.vstack([a_head, a_head[:1]])
    return Trajectory(q=q, v=v, a=a)


# Feasibility audit

def audit(scenario: Scenario, trajectory: Trajectory, link_plan: Optional[LinkPlan] = None) -> FeasibilityReport:
    """Named maximum violations of kinematics, periodicity, flight limits and the power constraints"""
    dt = scenario.slot_len
    q, v, a = trajectory.q, trajectory.v, trajectory.a
    speed = np.linalg.norm(v, axis=1)
    accel = np.linalg.norm(a, axis=1)

    residuals = {
        "kinematics_velocity": float(np.linalg.norm(v[1:] - v[:-1] - a[:-1] * dt, axis=1).max()),
        "kinematics_position": float(
            np.linalg.norm(q[1:] - q[:-1] - v[:-1] * dt - 0.5 * a[:-1] * dt**2, axis=1).max()
        ),
        "periodicity": float(max(np.linalg.norm(q[0] - q[-1]), np.linalg.norm(v[0] - v[-1]), np.linalg.norm(a[0] - a[-1]))),
        "speed_low": float(max(0.0, (scenario.v_min - speed).max())),
        "speed_high": float(max(0.0, (speed - scenario.v_max).max())),
        "acceleration": float(max(0.0, (accel - scenario.a_max).max())),
    }
    scales = {
        "speed_low": scenario.v_min,
        "speed_high": scenario.v_max,
        "acceleration": scenario.a_max,
    }

    if scenario.prop_limit is not None:
        # speeds clamped so hovering slots report a huge, finite violation
        avg_power = _power_at(scenario, np.maximum(speed[1:], SPEED_FLOOR), a[1:]).mean()
        residuals["prop_limit"] = float(max(0.0, avg_power - scenario.prop_limit))
        scales["prop_limit"] = scenario.prop_limit

    if link_plan is not None:
        p = link_plan.p
        residuals["power_box"] = float(max(0.0, (-p).max(), (p - scenario.peak_power).max()))
        scales["power_box"] = scenario.peak_power

        gains = channel_gains(scenario, q[1:])
        g_scale = scenario.peak_power * scenario.ref_snr / scenario.altitude**2
        residuals["gain_consistency"] = float(np.abs(link_plan.G - p * gains).max())
        scales["gain_consistency"] = g_scale

        if link_plan.V1 is not None:
            V1 = link_plan.V1
            slack = np.maximum(scenario.v_min - V1, V1 - speed[1:])
            residuals["speed_slack"] = float(max(0.0, slack.max()))
            scales["speed_slack"] = scenario.v_min

    return FeasibilityReport(residuals=residuals, scales=scales)


# Reporting

def plan_metrics(scenario: Scenario, trajectory: Trajectory, p: np.ndarray) -> Dict[str, object]:
    """Rates, power, energy and EE of a plan, keyed like the PlanReport fields"""
    rates = rate_matrix(scenario, trajectory.q, p)
    powers = propulsion_powers(scenario, trajectory.v[1:], trajectory.a[1:])
    avg_rates = rates.mean(axis=1)
    return {
        "rates": rates.tolist(),
        "avg_rate_per_gn": avg_rates.tolist(),
        "min_avg_rate": float(avg_rates.min()),
        "avg_prop_power_w": float(powers.mean()),
        "total_prop_energy_j": float(scenario.slot_len * powers.sum()),
        # W * dt * min bits over dt * sum P; dt cancels
        "ee_bits_per_joule": float(scenario.bandwidth * min_bits(rates) / powers.sum()),
        "avg_speed": float(np.linalg.norm(trajectory.v[1:], axis=1).mean()),
        "avg_acceleration": float(np.linalg.norm(trajectory.a[1:], axis=1).mean()),
    }


def evaluate_plan(
    scenario: Scenario,
    plan: FlightPlan,
    problem: str,
    audit_tol: float = 1e-5,
    feasibility: Optional[FeasibilityReport] = None,
    **fields,
) -> PlanReport:
    """Build the PlanReport of a finished plan; extra keyword fields (traces, status) are passed through"""
    report = feasibility or audit(scenario, plan.trajectory, plan.link)
    feasible = report.is_feasible(audit_tol)
    if not feasible:
        logger.warning("Plan from %s fails the audit at %.1e: %s", problem, audit_tol, report.normalized())
    fields.setdefault("status", PlanStatus.converged)
    return PlanReport(
        problem=problem,
        feasibility_residuals=report.residuals,
        feasible=feasible,
        **plan_metrics(scenario, plan.trajectory, plan.link.p),
        **fields,
    )
