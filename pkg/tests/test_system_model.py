# tests/test_system_model.py
import math

import numpy as np
import pytest

from tests.conftest import small_spec
from uavplan.models.plan_model import FeasibilityReport, LinkPlan, Trajectory
from uavplan.services.circular import circle_trajectory
from uavplan.services.system_model import (
    audit,
    channel_gain,
    channel_gains,
    complete_kinematics,
    instantaneous_rate,
    min_power_speed,
    propagate,
    propulsion_power,
    propulsion_powers,
    rate_matrix,
    rates_from_received,
)


def test_channel_gain_examples(scenario):
    assert channel_gain(scenario, [-150.0, 0.0], 0) == pytest.approx(1e4)
    assert channel_gain(scenario, [-50.0, 0.0], 0) == pytest.approx(5e3)
    unit = small_spec(ref_snr_db=0.0, altitude_m=1.0).to_scenario()
    assert channel_gain(unit, [-150.0, 0.0], 0) == pytest.approx(1.0)


def test_channel_gain_rejects_bad_index(scenario):
    with pytest.raises(IndexError):
        channel_gain(scenario, [0.0, 0.0], 2)


def test_channel_gains_decrease_with_distance(scenario):
    q = np.column_stack([np.linspace(-150.0, 500.0, 20), np.zeros(20)])
    gains = channel_gains(scenario, q)[0]
    assert np.all(np.diff(gains) < 0)


def test_instantaneous_rate_examples(scenario):
    assert instantaneous_rate(scenario, [1.0], [100.0], 0) == pytest.approx(math.log2(101.0))
    assert instantaneous_rate(scenario, [1.0, 1.0], [100.0, 100.0], 0) == pytest.approx(0.9928, abs=1e-4)
    assert instantaneous_rate(scenario, [1.0, 1.0], [0.0, 100.0], 0) == 0.0


def test_rate_decomposition_matches_sinr(rng, scenario):
    G = rng.uniform(0.0, 200.0, size=(3, 8))
    direct = np.array([[instantaneous_rate(scenario, np.ones(3), G[:, n], k) for n in range(8)] for k in range(3)])
    np.testing.assert_allclose(rates_from_received(G), direct, atol=1e-12)


def test_propulsion_power_examples(scenario):
    assert propulsion_power(scenario, [30.0, 0.0], [0.0, 0.0]) == pytest.approx(100.002, abs=1e-3)
    assert propulsion_power(scenario, [100.0, 0.0], [0.0, 0.0]) == pytest.approx(948.5, abs=1e-3)
    assert propulsion_power(scenario, [30.0, 0.0], [scenario.g, 0.0]) == pytest.approx(175.002, abs=1e-3)


def test_propulsion_power_at_zero_speed_raises(scenario):
    with pytest.raises(ValueError):
        propulsion_power(scenario, [0.0, 0.0], [0.0, 0.0])


def test_minimum_power_speed(scenario):
    v_star = min_power_speed(scenario)
    assert v_star == pytest.approx(29.98, abs=0.1)
    assert propulsion_power(scenario, [v_star, 0.0], [0.0, 0.0]) == pytest.approx(100.0, abs=0.5)


def test_propagate_constant_velocity():
    scenario = small_spec(period_s=12.0).to_scenario()
    traj = propagate(scenario, [0.0, 0.0], [30.0, 0.0], np.zeros((12, 2)))
    np.testing.assert_allclose(traj.q[:, 0], 30.0 * np.arange(13))


def test_propagate_single_step():
    scenario = small_spec(period_s=24.0).to_scenario()
    traj = propagate(scenario, [0.0, 0.0], [3.0, 0.0], [[1.0, 0.0]] + [[0.0, 0.0]] * 11)
    np.testing.assert_allclose(traj.v[1], [5.0, 0.0])
    np.testing.assert_allclose(traj.q[1], [8.0, 0.0])


def test_propagate_then_audit_has_no_kinematic_residual(rng, scenario):
    traj = propagate(scenario, [0.0, 0.0], [30.0, 0.0], rng.uniform(-1.0, 1.0, size=(12, 2)))
    report = audit(scenario, traj)
    assert report.residuals["kinematics_velocity"] < 1e-9
    assert report.residuals["kinematics_position"] < 1e-9


def test_complete_kinematics_closes_the_circle(scenario):
    traj = circle_trajectory(scenario, 200.0, kinematics="exact")
    report = audit(scenario, traj)
    assert report.is_feasible(1e-9), report.residuals
    speed = 2.0 * 200.0 * math.tan(math.pi / 12) / scenario.slot_len
    np.testing.assert_allclose(traj.speed, speed, rtol=1e-9)


def test_complete_kinematics_is_exact_for_odd_slot_count(rng):
    scenario = small_spec(slots=9, period_s=45.0).to_scenario()
    q = rng.uniform(-100.0, 100.0, size=(10, 2))
    q[-1] = q[0]
    traj = complete_kinematics(scenario, q)
    report = audit(scenario, traj)
    assert report.residuals["kinematics_position"] < 1e-9
    assert report.residuals["periodicity"] < 1e-9


def test_audit_reports_injected_speed_violation(scenario):
    traj = circle_trajectory(scenario, 200.0)
    v = traj.v.copy()
    v[3] *= (scenario.v_max + 1.0) / np.linalg.norm(v[3])
    report = audit(scenario, Trajectory(q=traj.q, v=v, a=traj.a))
    assert report.residuals["speed_high"] == pytest.approx(1.0)


def test_audit_prop_limit_boundary(scenario):
    traj = circle_trajectory(scenario, 200.0)
    avg = propulsion_powers(scenario, traj.v[1:], traj.a[1:]).mean()
    report = audit(scenario.with_prop_limit(avg), traj)
    assert report.residuals["prop_limit"] == 0.0


def test_audit_reports_prop_limit_for_hovering_slot(scenario):
    traj = circle_trajectory(scenario, 200.0)
    v = traj.v.copy()
    v[4] = 0.0
    report = audit(scenario, Trajectory(q=traj.q, v=v, a=traj.a))
    assert np.isfinite(report.residuals["prop_limit"])
    assert report.residuals["prop_limit"] > scenario.prop_limit
    assert report.residuals["speed_low"] == pytest.approx(scenario.v_min)
    assert not report.is_feasible(1e-3)


def test_audit_checks_gain_consistency(scenario):
    traj = circle_trajectory(scenario, 200.0)
    p = np.full((2, 12), scenario.peak_power)
    G = p * channel_gains(scenario, traj.q[1:])
    assert audit(scenario, traj, LinkPlan(G=G, p=p)).residuals["gain_consistency"] == pytest.approx(0.0, abs=1e-9)
    bad = audit(scenario, traj, LinkPlan(G=G * 1.1, p=p))
    assert bad.normalized()["gain_consistency"] > 1e-3


def test_rate_matrix_uses_slots_one_to_n(scenario):
    traj = circle_trajectory(scenario, 200.0)
    p = np.full((2, 12), scenario.peak_power)
    rates = rate_matrix(scenario, traj.q, p)
    assert rates.shape == (2, 12)
    assert np.all(rates > 0)


def test_feasibility_report_units():
    report = FeasibilityReport(
        residuals={"angular_kinematics": 2e-6, "periodicity": 3e-6, "acceleration": 0.5},
        scales={"angular_kinematics": 1e-3, "acceleration": 5.0},
    )
    normalized = report.normalized()
    assert normalized["angular_kinematics"] == 2e-6
    assert normalized["periodicity"] == 3e-6
    assert normalized["acceleration"] == pytest.approx(0.1)
    assert "ABSOLUTE" not in report.model_dump()
    assert "ABSOLUTE" not in FeasibilityReport.model_fields
