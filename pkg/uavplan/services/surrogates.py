# uavplan/services/surrogates.py
"""
Convex and concave surrogates used by the SCA iterations.

Every received-power bound goes through one kernel, f(u) = 1 / (rho ||u||^2 + z),
and its concave quadratic minorant

    g(u) = -rho ||u||^2 / z^2 + B (u . u_l) + C
    B = 2 rho (1 / z^2 - 1 / (rho ||u_l||^2 + z)^2)
    C = 1 / s_l + 2 rho ||u_l||^2 / s_l^2 - rho ||u_l||^2 / z^2,   s_l = rho ||u_l||^2 + z

which matches f in value and gradient at u_l and lies below it everywhere.
The Cartesian received-power bound, the radius bound and the angle bound of the
circular baseline are specializations of it.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel

from uavplan.models.scenario_model import Scenario
from uavplan.services.oracle import finite_diff_gradient

logger = logging.getLogger(__name__)

LOG2E = 1.0 / np.log(2.0)


# Kernel

def _sq_norm(u: np.ndarray) -> np.ndarray:
    return (np.asarray(u, dtype=float) ** 2).sum(axis=-1)


def kernel_value(u: np.ndarray, rho, z) -> np.ndarray:
    """f(u) = 1 / (rho ||u||^2 + z); the last axis of u is the vector axis"""
    return 1.0 / (rho * _sq_norm(u) + z)


def kernel_coeffs(u_l: np.ndarray, rho, z) -> Tuple[np.ndarray, np.ndarray]:
    """Constants (B, C) of the quadratic minorant expanded at u_l"""
    sq_l = _sq_norm(u_l)
    s_l = rho * sq_l + z
    B = 2.0 * rho * (1.0 / z**2 - 1.0 / s_l**2)
    C = 1.0 / s_l + 2.0 * rho * sq_l / s_l**2 - rho * sq_l / z**2
    return np.asarray(B, dtype=float), np.asarray(C, dtype=float)


def kernel_lb(u: np.ndarray, u_l: np.ndarray, rho, z) -> np.ndarray:
    """Concave quadratic minorant of kernel_value, tight at u_l"""
    B, C = kernel_coeffs(u_l, rho, z)
    dot = (np.asarray(u, dtype=float) * np.asarray(u_l, dtype=float)).sum(axis=-1)
    return -rho * _sq_norm(u) / z**2 + B * dot + C


def kernel_gradient(u: np.ndarray, rho, z) -> np.ndarray:
    """Gradient of kernel_value: -2 rho u / s^2"""
    u = np.asarray(u, dtype=float)
    rho = np.asarray(rho, dtype=float)
    s = rho * _sq_norm(u) + z
    return -2.0 * rho[..., None] * u / s[..., None] ** 2


def kernel_lb_gradient(u: np.ndarray, u_l: np.ndarray, rho, z) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    z = np.asarray(z, dtype=float)
    B, _ = kernel_coeffs(u_l, rho, z)
    return -2.0 * (rho / z**2)[..., None] * np.asarray(u, dtype=float) + B[..., None] * np.asarray(u_l, dtype=float)


def kernel_gap_hessian(u: np.ndarray, rho: float, z: float) -> np.ndarray:
    """
    Hessian of f - g at a single point u, which does not depend on u_l:

        2 rho (1 / z^2 - 1 / s^2) I + 8 rho^2 u u^T / s^3

    Both terms are PSD for rho >= 0, z > 0.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    s = rho * (u @ u) + z
    return 2.0 * rho * (1.0 / z**2 - 1.0 / s**2) * np.eye(u.size) + 8.0 * rho**2 * np.outer(u, u) / s**3


def kernel_quadratic_form(b: np.ndarray, u_l: np.ndarray, rho, z):
    """
    Write -g(x - b) as quad * ||x||^2 + lin . x + const.

    Returns (quad, lin, const) with quad >= 0, so S - P g(x - b) <= 0 is a
    separable convex quadratic constraint in x. b and u_l have the vector axis last.
    """
    b = np.asarray(b, dtype=float)
    u_l = np.asarray(u_l, dtype=float)
    rho = np.asarray(rho, dtype=float)
    z = np.asarray(z, dtype=float)
    B, C = kernel_coeffs(u_l, rho, z)
    quad = np.broadcast_to(rho / z**2, np.shape(B))
    lin = -2.0 * quad[..., None] * b - B[..., None] * u_l
    const = quad * _sq_norm(b) + B * (b * u_l).sum(axis=-1) - C
    return quad, lin, const


# Coefficients of one SCA expansion

@dataclass(frozen=True)
class SurrogateCoeffs:
    """Per-slot, per-GN expansion constants; arrays are (K, N) unless noted"""

    gamma_hat: Optional[np.ndarray] = None
    interference: Optional[np.ndarray] = None
    B: Optional[np.ndarray] = None
    C: Optional[np.ndarray] = None
    b_check: Optional[np.ndarray] = None
    A_check: Optional[np.ndarray] = None
    B_check: Optional[np.ndarray] = None
    C_check: Optional[np.ndarray] = None
    b_hat: Optional[np.ndarray] = None
    A_hat: Optional[np.ndarray] = None
    B_hat: Optional[np.ndarray] = None
    C_hat: Optional[np.ndarray] = None
    rho_hat: Optional[np.ndarray] = None
    expansion: Dict[str, np.ndarray] = field(default_factory=dict)

    def check(self, scenario: Scenario) -> None:
        """Raise ValueError unless every populated constant is finite and the denominators are valid"""
        for name in ("gamma_hat", "interference", "B", "C", "b_check", "A_check", "B_check", "C_check",
                     "b_hat", "A_hat", "B_hat", "C_hat"):
            value = getattr(self, name)
            if value is not None and not np.all(np.isfinite(value)):
                raise ValueError(f"non-finite surrogate constant {name}")
        if self.A_check is not None and np.any(self.A_check < scenario.altitude**2 * (1 - 1e-12)):
            raise ValueError("A_check below H^2")
        if self.A_hat is not None and np.any(self.A_hat <= 0):
            raise ValueError("A_hat must be positive")


def rate_coeffs(G_l: np.ndarray) -> Dict[str, np.ndarray]:
    """Slopes Gamma_k[n] = log2(e) / (1 + I_k[n]) of the interference-rate upper bound at G_l"""
    G_l = np.asarray(G_l, dtype=float)
    interference = G_l.sum(axis=0, keepdims=True) - G_l
    return {"gamma_hat": LOG2E / (1.0 + interference), "interference": interference}


def cartesian_coeffs(scenario: Scenario, q_l: np.ndarray, G_l: np.ndarray) -> SurrogateCoeffs:
    """Expansion constants for the Cartesian planners; q_l is q[1..N] (N, 2)"""
    u_l = np.asarray(q_l, dtype=float)[None, :, :] - scenario.gn_array[:, None, :]
    B, C = kernel_coeffs(u_l, 1.0, scenario.altitude**2)
    return SurrogateCoeffs(B=B, C=C, expansion={"q": np.asarray(q_l), "G": np.asarray(G_l)}, **rate_coeffs(G_l))


def radius_coeffs(scenario: Scenario, r_l: float, theta: np.ndarray, zeta: np.ndarray, phi: np.ndarray,
                  S_l: np.ndarray) -> SurrogateCoeffs:
    """Constants of the radius bound; theta holds slots 1..N"""
    diff = np.asarray(theta)[None, :] - np.asarray(phi)[:, None]
    zeta = np.asarray(zeta)[:, None]
    b_check = zeta * np.cos(diff)
    A_check = zeta**2 * np.sin(diff) ** 2 + scenario.altitude**2
    B_check, C_check = kernel_coeffs((r_l - b_check)[..., None], 1.0, A_check)
    return SurrogateCoeffs(
        b_check=b_check, A_check=A_check, B_check=B_check, C_check=C_check,
        expansion={"r": np.asarray(r_l), "S": np.asarray(S_l)}, **rate_coeffs(S_l),
    )


def angle_coeffs(scenario: Scenario, r: float, theta_l: np.ndarray, zeta: np.ndarray, phi: np.ndarray,
                 S_l: np.ndarray) -> SurrogateCoeffs:
    """Constants of the angle bound; theta_l holds slots 1..N"""
    diff = np.asarray(theta_l)[None, :] - np.asarray(phi)[:, None]
    zeta = np.asarray(zeta)[:, None] * np.ones_like(diff)
    rho = r * zeta
    b_hat = np.asarray(theta_l)[None, :] - np.sin(diff)
    A_hat = r**2 + zeta**2 + scenario.altitude**2 - rho * (2.0 * np.cos(diff) + np.sin(diff) ** 2)
    B_hat, C_hat = kernel_coeffs(np.sin(diff)[..., None], rho, A_hat)
    return SurrogateCoeffs(
        b_hat=b_hat, A_hat=A_hat, B_hat=B_hat, C_hat=C_hat, rho_hat=rho,
        expansion={"theta": np.asarray(theta_l), "S": np.asarray(S_l)}, **rate_coeffs(S_l),
    )


# Individual surrogates

def interference_rate(G: np.ndarray) -> np.ndarray:
    """log2(1 + sum_j G_j), summing over axis 0"""
    return np.log2(1.0 + np.asarray(G, dtype=float).sum(axis=0))


def rate_interference_ub(G_prev: np.ndarray, G_new: np.ndarray) -> np.ndarray:
    """First-order upper bound on log2(1 + sum_j G_new_j) expanded at G_prev (interferers on axis 0)"""
    prev = np.asarray(G_prev, dtype=float).sum(axis=0)
    new = np.asarray(G_new, dtype=float).sum(axis=0)
    return np.log2(1.0 + prev) + LOG2E * (new - prev) / (1.0 + prev)


def gmax(scenario: Scenario, k: int, q: np.ndarray) -> np.ndarray:
    """Largest received power P_peak h_k at q"""
    u = np.asarray(q, dtype=float) - scenario.gn_array[k]
    return scenario.peak_power * scenario.ref_snr * kernel_value(u, 1.0, scenario.altitude**2)


def gmax_lb(scenario: Scenario, k: int, q_prev_n: np.ndarray, q_new_n: np.ndarray) -> np.ndarray:
    """Concave lower bound on P_peak h_k at q_new_n, tight at q_prev_n"""
    w = scenario.gn_array[k]
    u = np.asarray(q_new_n, dtype=float) - w
    u_l = np.asarray(q_prev_n, dtype=float) - w
    return scenario.peak_power * scenario.ref_snr * kernel_lb(u, u_l, 1.0, scenario.altitude**2)


def speed_sq_lb(v_prev_n: np.ndarray, v_new_n: np.ndarray) -> np.ndarray:
    """-||v||^2 + 2 v_l . (2 v - v_l); the gap to ||v||^2 is exactly 2 ||v - v_l||^2"""
    v_prev_n = np.asarray(v_prev_n, dtype=float)
    v_new_n = np.asarray(v_new_n, dtype=float)
    return -_sq_norm(v_new_n) + 2.0 * (v_prev_n * (2.0 * v_new_n - v_prev_n)).sum(axis=-1)


def cos_lb(phi_prev, phi_new) -> np.ndarray:
    """Concave quadratic lower bound on cos(phi_new), tight at phi_prev"""
    phi_prev = np.asarray(phi_prev, dtype=float)
    return -((phi_new - phi_prev + np.sin(phi_prev)) ** 2) / 2.0 + np.cos(phi_prev) + np.sin(phi_prev) ** 2 / 2.0


def circular_distance_sq(scenario: Scenario, r, theta, zeta, phi) -> np.ndarray:
    """Squared UAV-GN distance on a circle centred at the GN centroid"""
    return r**2 + zeta**2 - 2.0 * r * zeta * np.cos(theta - phi) + scenario.altitude**2


def smax(scenario: Scenario, r, theta, zeta, phi) -> np.ndarray:
    """Largest received power on the circle, P_peak gamma0 / d^2"""
    return scenario.peak_power * scenario.ref_snr / circular_distance_sq(scenario, r, theta, zeta, phi)


def smax_lb1(scenario: Scenario, circ_state, k: int, n: int, r_prev, r_new) -> np.ndarray:
    """Concave bound on the largest received power in the radius, at fixed angle theta[n]"""
    diff = circ_state.theta[n] - circ_state.phi[k]
    zeta = circ_state.zeta[k]
    b_check = zeta * np.cos(diff)
    A_check = zeta**2 * np.sin(diff) ** 2 + scenario.altitude**2
    u = np.asarray(r_new, dtype=float) - b_check
    u_l = np.asarray(r_prev, dtype=float) - b_check
    return scenario.peak_power * scenario.ref_snr * kernel_lb(u[..., None], u_l[..., None], 1.0, A_check)


def _angle_params(scenario: Scenario, r: float, zeta: float, phi: float, theta_prev):
    diff = np.asarray(theta_prev, dtype=float) - phi
    rho = r * zeta
    A_hat = r**2 + zeta**2 + scenario.altitude**2 - rho * (2.0 * np.cos(diff) + np.sin(diff) ** 2)
    b_hat = theta_prev - np.sin(diff)
    return rho, A_hat, b_hat, np.sin(diff)


def smax_angle_mid(scenario: Scenario, circ_state, k: int, theta_prev, theta_new) -> np.ndarray:
    """Intermediate bound P_peak gamma0 / (rho u^2 + A_hat) obtained by bounding the cosine"""
    rho, A_hat, b_hat, _ = _angle_params(scenario, circ_state.radius, circ_state.zeta[k], circ_state.phi[k], theta_prev)
    u = np.asarray(theta_new, dtype=float) - b_hat
    return scenario.peak_power * scenario.ref_snr * kernel_value(u[..., None], rho, A_hat)


def smax_lb2(scenario: Scenario, circ_state, k: int, n: int, theta_prev, theta_new) -> np.ndarray:
    """Concave bound on the largest received power in the angle, at fixed radius"""
    rho, A_hat, b_hat, u_l = _angle_params(scenario, circ_state.radius, circ_state.zeta[k], circ_state.phi[k], theta_prev)
    u = np.asarray(theta_new, dtype=float) - b_hat
    return scenario.peak_power * scenario.ref_snr * kernel_lb(u[..., None], np.asarray(u_l)[..., None], rho, A_hat)


# Verification

class SurrogateCheck(BaseModel):
    """Outcome of the value / gradient / global-bound checks of one surrogate"""

    name: str
    direction: str
    value_gap: float
    gradient_gap: float
    max_violation: float
    max_relative_violation: float
    nonfinite: int
    samples: int
    passed: bool


def verify_surrogate(
    f: Callable[[np.ndarray], float],
    g: Callable[[np.ndarray], float],
    x_l: Sequence[float],
    sample_box: Optional[Tuple[Sequence[float], Sequence[float]]] = None,
    direction: str = "lower",
    samples: int = 10_000,
    seed: int = 7,
    name: str = "surrogate",
    value_tol: float = 1e-9,
    gradient_tol: float = 1e-6,
    bound_tol: float = 1e-9,
) -> SurrogateCheck:
    """
    Check that g is a valid surrogate of f expanded at x_l.

    The value and gradient gaps at x_l are relative to max(1, |f|) and
    max(1, ||grad f||_inf); gradients of both sides come from central
    differences. The global bound is sampled uniformly on sample_box, which
    defaults to x_l +/- 10 max(1, |x_l|). direction="lower" requires g <= f,
    "upper" requires g >= f. Samples where either side is not finite are
    counted and excluded.
    """
    if direction not in ("lower", "upper"):
        raise ValueError(f"direction must be 'lower' or 'upper', got {direction!r}")
    x_l = np.atleast_1d(np.asarray(x_l, dtype=float))
    if sample_box is None:
        radius = 10.0 * np.maximum(1.0, np.abs(x_l))
        lo, hi = x_l - radius, x_l + radius
    else:
        lo, hi = (np.broadcast_to(np.asarray(b, dtype=float), x_l.shape) for b in sample_box)

    f_l, g_l = float(f(x_l)), float(g(x_l))
    value_gap = abs(f_l - g_l) / max(1.0, abs(f_l))

    grad_f = finite_diff_gradient(f, x_l)
    grad_g = finite_diff_gradient(g, x_l)
    gradient_gap = float(np.abs(grad_f - grad_g).max() / max(1.0, np.abs(grad_f).max()))

    rng = np.random.default_rng(seed)
    points = rng.uniform(lo, hi, size=(samples, x_l.size))
    sign = 1.0 if direction == "lower" else -1.0
    worst = worst_rel = -np.inf
    nonfinite = 0
    with np.errstate(all="ignore"):
        for x in points:
            fx, gx = float(f(x)), float(g(x))
            if not (np.isfinite(fx) and np.isfinite(gx)):
                nonfinite += 1
                continue
            gap = sign * (gx - fx)
            worst = max(worst, gap)
            worst_rel = max(worst_rel, gap / max(1.0, abs(fx)))

    if nonfinite:
        logger.warning("%s: %d of %d samples were not finite", name, nonfinite, samples)
    passed = value_gap <= value_tol and gradient_gap <= gradient_tol and worst_rel <= bound_tol
    return SurrogateCheck(
        name=name,
        direction=direction,
        value_gap=value_gap,
        gradient_gap=gradient_gap,
        max_violation=float(worst),
        max_relative_violation=float(worst_rel),
        nonfinite=nonfinite,
        samples=samples,
        passed=passed,
    )


@dataclass(frozen=True)
class _PolarPoint:
    radius: float
    theta: np.ndarray
    zeta: np.ndarray
    phi: np.ndarray


def surrogate_suite(scenario: Scenario, samples: int = 10_000, seed: int = 7) -> List[SurrogateCheck]:
    """Run verify_surrogate on every surrogate family at seeded random expansion points"""
    rng = np.random.default_rng(seed)
    checks = []

    G_l = rng.uniform(0.0, 100.0, size=3)
    checks.append(verify_surrogate(
        lambda G: interference_rate(G), lambda G: rate_interference_ub(G_l, G), G_l,
        sample_box=(np.zeros(3), np.full(3, 100.0)), direction="upper", samples=samples, seed=seed + 1,
        name="rate_interference_ub",
    ))

    w = scenario.gn_array[0]
    q_l = w + rng.uniform(-500.0, 500.0, size=2)
    checks.append(verify_surrogate(
        lambda q: gmax(scenario, 0, q), lambda q: gmax_lb(scenario, 0, q_l, q), q_l,
        sample_box=(q_l - 2000.0, q_l + 2000.0), samples=samples, seed=seed + 2, name="gmax_lb",
    ))

    v_l = rng.uniform(-scenario.v_max, scenario.v_max, size=2)
    checks.append(verify_surrogate(
        lambda v: v @ v, lambda v: speed_sq_lb(v_l, v), v_l, samples=samples, seed=seed + 3, name="speed_sq_lb",
    ))

    phi_l = rng.uniform(-4 * np.pi, 4 * np.pi)
    checks.append(verify_surrogate(
        lambda x: np.cos(x[0]), lambda x: cos_lb(phi_l, x[0]), [phi_l],
        sample_box=([-4 * np.pi], [4 * np.pi]), samples=samples, seed=seed + 4, name="cos_lb",
    ))

    state = _PolarPoint(
        radius=float(rng.uniform(10.0, 2000.0)),
        theta=np.array([rng.uniform(0.0, 2 * np.pi)]),
        zeta=np.array([rng.uniform(0.0, 1000.0)]),
        phi=np.array([rng.uniform(-np.pi, np.pi)]),
    )
    r_l = state.radius
    checks.append(verify_surrogate(
        lambda r: smax(scenario, r[0], state.theta[0], state.zeta[0], state.phi[0]),
        lambda r: smax_lb1(scenario, state, 0, 0, r_l, r[0]), [r_l],
        sample_box=([10.0], [2000.0]), samples=samples, seed=seed + 5, name="smax_lb1",
    ))

    theta_l = state.theta[0]
    box = ([theta_l - 4 * np.pi], [theta_l + 4 * np.pi])
    checks.append(verify_surrogate(
        lambda th: smax(scenario, state.radius, th[0], state.zeta[0], state.phi[0]),
        lambda th: smax_angle_mid(scenario, state, 0, theta_l, th[0]), [theta_l],
        sample_box=box, samples=samples, seed=seed + 6, name="smax_angle_mid",
    ))
    checks.append(verify_surrogate(
        lambda th: smax_angle_mid(scenario, state, 0, theta_l, th[0]),
        lambda th: smax_lb2(scenario, state, 0, 0, theta_l, th[0]), [theta_l],
        sample_box=box, samples=samples, seed=seed + 7, name="smax_lb2",
    ))

    for check in checks:
        logger.info("%-22s value %.1e grad %.1e bound %.1e -> %s", check.name, check.value_gap,
                    check.gradient_gap, check.max_relative_violation, "ok" if check.passed else "FAIL")
    return checks
