# tests/test_subproblems.py
import math

import numpy as np
import pytest

from uavplan.errors import InfeasiblePlanError
from uavplan.models.plan_model import FlightPlan, LinkPlan
from uavplan.services.circular import circle_trajectory, circle_radius_interval, circular_state_from_radius, init_plan
from uavplan.services.oracle import finite_diff_gradient
from uavplan.services.planners import plan_from_point
from uavplan.services.subproblems import (
    AngularPropulsion,
    CartesianPropulsion,
    build_p12,
    build_p23,
    build_p31,
    build_p32,
    kinematic_equalities,
    radius_bounds,
)
from uavplan.services.subsolver import VariableLayout, solve
from uavplan.services.system_model import (
    channel_gains,
    min_bits,
    propulsion_powers,
    rate_matrix,
    rates_from_received,
)


@pytest.fixture
def unlimited(scenario):
    return scenario.with_prop_limit(None)


@pytest.fixture
def plan(unlimited):
    return init_plan(unlimited)


def equality_residual(sub, x):
    return float(np.abs(sub.A_eq @ x - sub.b_eq).max())


def test_kinematic_equalities_shape():
    layout = VariableLayout([("q", (5, 2)), ("v", (5, 2)), ("a", (5, 2))])
    A, b = kinematic_equalities(layout, "q", "v", "a", dt=2.0)
    assert A.shape == (2 * 2 * 4 + 3 * 2, layout.size)
    assert b.shape == (A.shape[0],)


def test_p12_surrogate_is_tight_at_expansion(unlimited, plan):
    sub = build_p12(unlimited, plan)
    rates = rate_matrix(unlimited, plan.trajectory.q, plan.link.p)
    assert sub.epigraph(sub.x_expansion) == pytest.approx(rates.mean(axis=1).min(), rel=1e-9)


def test_p12_warm_start_is_strictly_feasible(unlimited, plan):
    sub = build_p12(unlimited, plan)
    name, row, worst = sub.worst_constraint(sub.x0)
    assert worst < 0.0, (name, row, worst)
    assert equality_residual(sub, sub.x0) < 1e-8
    assert equality_residual(sub, sub.x_expansion) < 1e-8


def test_prop_limit_rows_follow_the_problem(scenario):
    plan = init_plan(scenario)
    assert "prop_limit" in [block.name for block in build_p12(scenario, plan).constraints]
    assert "prop_limit" not in [block.name for block in build_p23(scenario, plan, 1e-3).constraints]
    assert "prop_limit" not in [block.name for block in build_p12(scenario.with_prop_limit(None), plan).constraints]


def test_p23_surrogate_is_tight_at_expansion(unlimited, plan):
    lam = 1e-3
    sub = build_p23(unlimited, plan, lam)
    traj = plan.trajectory
    eta = min_bits(rate_matrix(unlimited, traj.q, plan.link.p))
    mu = propulsion_powers(unlimited, traj.v[1:], traj.a[1:]).sum()
    assert sub.epigraph(sub.x_expansion) == pytest.approx(eta - lam * mu, rel=1e-9)
    assert sub.worst_constraint(sub.x0)[2] < 0.0


def test_p23_with_a_large_price_cruises_at_the_minimum_power_speed(unlimited, plan):
    # lambda * mu dominates eta, so the steps minimize propulsion energy
    v_star = (unlimited.c2 / (3.0 * unlimited.c1)) ** 0.25
    assert v_star == pytest.approx(30.0, rel=1e-2)
    start_power = propulsion_powers(unlimited, plan.trajectory.v[1:], plan.trajectory.a[1:]).mean()
    current = plan
    for _ in range(30):
        result = solve(build_p23(unlimited, current, 10.0), tol=1e-7, restore_interior=True)
        assert result.usable, result.message
        current = plan_from_point(unlimited, result.point)
    traj = current.trajectory
    assert propulsion_powers(unlimited, traj.v[1:], traj.a[1:]).mean() < start_power
    assert np.median(traj.speed[1:]) == pytest.approx(v_star, rel=5e-2)


def test_p23_rejects_negative_lambda(unlimited, plan):
    with pytest.raises(ValueError):
        build_p23(unlimited, plan, -1.0)


def test_infeasible_expansion_point_is_rejected(unlimited):
    # speed far above v_max
    traj = circle_trajectory(unlimited, 5000.0)
    p = np.full((2, unlimited.slots), unlimited.peak_power)
    link = LinkPlan(G=p * channel_gains(unlimited, traj.q[1:]), p=p, V1=traj.speed[1:])
    with pytest.raises(InfeasiblePlanError, match="speed_high"):
        build_p12(unlimited, FlightPlan(trajectory=traj, link=link))


def test_cartesian_propulsion_derivatives(unlimited, plan):
    sub = build_p12(unlimited, plan)
    model = CartesianPropulsion(unlimited, sub.layout)
    x = sub.x_expansion
    traj = plan.trajectory
    assert model.value(x) == pytest.approx(propulsion_powers(unlimited, traj.v[1:], traj.a[1:]).sum(), rel=1e-12)
    np.testing.assert_allclose(model.gradient(x), finite_diff_gradient(model.value, x), rtol=1e-5, atol=1e-6)

    touched = np.concatenate([sub.layout.indices("v")[1:].ravel(), sub.layout.indices("V1")])
    numeric = np.array([finite_diff_gradient(lambda y: model.gradient(y)[i], x)[touched] for i in touched])
    np.testing.assert_allclose(model.hessian(x).toarray()[np.ix_(touched, touched)], numeric, rtol=1e-4, atol=1e-6)


def test_rate_block_jacobian(unlimited, plan):
    sub = build_p12(unlimited, plan)
    rate = next(block for block in sub.constraints if block.name == "rate")
    x = sub.x0
    J = rate.jacobian(x).toarray()
    for k in range(rate.size):
        numeric = finite_diff_gradient(lambda y: rate.values(y)[k], x)
        np.testing.assert_allclose(J[k], numeric, rtol=1e-5, atol=1e-7)


def test_radius_bounds_match_the_constant_speed_circle(scenario):
    omega = np.full(scenario.slots, 2 * math.pi / scenario.period)
    lo, hi = radius_bounds(scenario, omega, np.zeros(scenario.slots))
    assert (lo, hi) == pytest.approx(circle_radius_interval(scenario), rel=1e-12)


def test_p31_surrogate_is_tight_and_warm_start_interior(unlimited):
    state = circular_state_from_radius(unlimited, 200.0)
    sub = build_p31(unlimited, state)
    assert sub.epigraph(sub.x_expansion) == pytest.approx(rates_from_received(state.S).mean(axis=1).min(), rel=1e-9)
    assert sub.worst_constraint(sub.x0)[2] < 0.0


def test_p32_surrogate_is_tight_and_warm_start_interior(unlimited):
    state = circular_state_from_radius(unlimited, 200.0)
    sub = build_p32(unlimited, state)
    assert sub.epigraph(sub.x_expansion) == pytest.approx(rates_from_received(state.S).mean(axis=1).min(), rel=1e-9)
    assert sub.worst_constraint(sub.x0)[2] < 0.0
    assert equality_residual(sub, sub.x_expansion) < 1e-10


def test_angular_propulsion_derivatives(unlimited):
    state = circular_state_from_radius(unlimited, 200.0)
    sub = build_p32(unlimited, state, lambda_m=1e-3)
    model = AngularPropulsion(unlimited, sub.layout, state.radius)
    x = sub.x_expansion.copy()
    x[sub.layout.indices("alpha")] = 1e-3
    np.testing.assert_allclose(model.gradient(x), finite_diff_gradient(model.value, x), rtol=1e-5, atol=1e-6)


def test_p31_rejects_an_empty_radius_box(unlimited):
    state = circular_state_from_radius(unlimited, 200.0)
    # v_min / omega above a_max / omega^2
    slow = state.replace(omega=np.full(unlimited.slots + 1, 10.0))
    with pytest.raises(InfeasiblePlanError):
        build_p31(unlimited, slow)
