# tests/test_surrogates.py
import numpy as np
import pytest

from uavplan.services import surrogates
from uavplan.services.oracle import finite_diff_gradient
from uavplan.services.surrogates import (
    cos_lb,
    kernel_gap_hessian,
    kernel_gradient,
    kernel_lb,
    kernel_lb_gradient,
    kernel_quadratic_form,
    kernel_value,
    speed_sq_lb,
    surrogate_suite,
    verify_surrogate,
)


def test_kernel_minorant_is_tight_at_expansion(rng):
    u_l = rng.uniform(-500.0, 500.0, size=(5, 2))
    np.testing.assert_allclose(kernel_lb(u_l, u_l, 1.0, 1e4), kernel_value(u_l, 1.0, 1e4), rtol=1e-12)
    np.testing.assert_allclose(kernel_lb_gradient(u_l, u_l, 1.0, 1e4), kernel_gradient(u_l, 1.0, 1e4), rtol=1e-10,
                               atol=1e-18)


def test_kernel_gradient_matches_finite_differences(rng):
    u = rng.uniform(-300.0, 300.0, size=2)
    numeric = finite_diff_gradient(lambda x: kernel_value(x, 2.5, 3e4), u)
    np.testing.assert_allclose(kernel_gradient(u, 2.5, 3e4), numeric, rtol=1e-6, atol=1e-15)


def test_kernel_minorant_lies_below(rng):
    u_l = rng.uniform(-500.0, 500.0, size=2)
    u = rng.uniform(-3000.0, 3000.0, size=(1000, 2))
    assert np.all(kernel_lb(u, u_l, 1.0, 1e4) <= kernel_value(u, 1.0, 1e4) + 1e-15)


def test_gap_hessian_is_positive_semidefinite(rng):
    for _ in range(20):
        u = rng.uniform(-1000.0, 1000.0, size=2)
        rho, z = rng.uniform(0.1, 10.0), rng.uniform(1e2, 1e5)
        assert np.linalg.eigvalsh(kernel_gap_hessian(u, rho, z)).min() >= -1e-18


def test_quadratic_form_reproduces_minorant(rng):
    b = rng.uniform(-200.0, 200.0, size=(3, 4, 2))
    u_l = rng.uniform(-300.0, 300.0, size=(3, 4, 2))
    quad, lin, const = kernel_quadratic_form(b, u_l, 1.0, 1e4)
    assert np.all(quad >= 0)
    x = rng.uniform(-500.0, 500.0, size=(3, 4, 2))
    expected = -kernel_lb(x - b, u_l, 1.0, 1e4)
    actual = quad * (x**2).sum(axis=-1) + (lin * x).sum(axis=-1) + const
    np.testing.assert_allclose(actual, expected, rtol=1e-9, atol=1e-15)


def test_speed_bound_gap_is_exact(rng):
    v_l = rng.uniform(-100.0, 100.0, size=(50, 2))
    v = rng.uniform(-100.0, 100.0, size=(50, 2))
    gap = (v**2).sum(axis=1) - speed_sq_lb(v_l, v)
    np.testing.assert_allclose(gap, 2.0 * ((v - v_l) ** 2).sum(axis=1), rtol=1e-12, atol=1e-9)


def test_cosine_bound_is_tight_and_below(rng):
    phi_l = rng.uniform(-np.pi, np.pi)
    assert cos_lb(phi_l, phi_l) == pytest.approx(np.cos(phi_l), abs=1e-15)
    grid = np.linspace(-4 * np.pi, 4 * np.pi, 2001)
    assert np.all(cos_lb(phi_l, grid) <= np.cos(grid) + 1e-15)


def test_cartesian_coeffs_shapes(scenario):
    q_l = np.column_stack([np.linspace(-100.0, 100.0, 12), np.full(12, 50.0)])
    G_l = np.full((2, 12), 10.0)
    coeffs = surrogates.cartesian_coeffs(scenario, q_l, G_l)
    coeffs.check(scenario)
    assert coeffs.B.shape == (2, 12)
    np.testing.assert_allclose(coeffs.interference, 10.0)
    np.testing.assert_allclose(coeffs.gamma_hat, surrogates.LOG2E / 11.0)


def test_verify_surrogate_flags_a_loose_surrogate():
    check = verify_surrogate(lambda x: float(x @ x), lambda x: float(x @ x) - 0.5, [1.0, 2.0], samples=200)
    assert check.value_gap > 0.05
    assert not check.passed


def test_verify_surrogate_flags_a_violated_bound():
    # Tangent line of a convex function is a lower bound, not an upper one
    check = verify_surrogate(lambda x: float(x[0] ** 2), lambda x: 2.0 * x[0] - 1.0, [1.0], direction="upper",
                             samples=500)
    assert check.value_gap == 0.0
    assert check.max_violation > 0
    assert not check.passed


def test_verify_surrogate_rejects_unknown_direction():
    with pytest.raises(ValueError):
        verify_surrogate(lambda x: 0.0, lambda x: 0.0, [0.0], direction="sideways")


def test_surrogate_suite_passes(default_scenario):
    checks = surrogate_suite(default_scenario, samples=2000, seed=7)
    assert len(checks) == 7
    failed = {c.name: c for c in checks if not c.passed}
    assert not failed, failed
    assert all(c.nonfinite == 0 for c in checks)
