# uavplan/services/subproblems.py
"""
Builders turning the current SCA iterate into a convex SubProblem.

All inequality rows are scaled to O(1): received powers by P_peak gamma0 / H^2,
speeds by V_max (or V_max^2), accelerations by a_max^2 and propulsion power by
P_lim. Rate rows stay in bits/s/Hz.
"""
import logging
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp

from uavplan.errors import InfeasiblePlanError
from uavplan.models.plan_model import CircularState, FlightPlan
from uavplan.models.scenario_model import Scenario
from uavplan.services import surrogates
from uavplan.services.subsolver import (
    ConstraintKind,
    FunctionBlock,
    Objective,
    SeparableQuadraticBlock,
    SubProblem,
    VariableLayout,
)
from uavplan.services.system_model import audit, circular_propulsion_power

logger = logging.getLogger(__name__)

# Relative distance the warm start is kept from each constraint boundary
RECEIVED_MARGIN = 1e-9
SLACK_MARGIN = 1e-6
EPIGRAPH_MARGIN = 1e-9


# Assembly helpers

class _Rows:
    """Triplet accumulator for a SeparableQuadraticBlock"""

    def __init__(self, m: int, n: int):
        self.m, self.n = m, n
        self._quad = ([], [], [])
        self._lin = ([], [], [])
        self.c = np.zeros(m)

    @staticmethod
    def _append(store, rows, cols, vals):
        rows, cols, vals = np.broadcast_arrays(np.asarray(rows), np.asarray(cols), np.asarray(vals, dtype=float))
        for target, part in zip(store, (rows, cols, vals)):
            target.append(part.ravel())

    def quad(self, rows, cols, vals) -> None:
        self._append(self._quad, rows, cols, vals)

    def lin(self, rows, cols, vals) -> None:
        self._append(self._lin, rows, cols, vals)

    def _matrix(self, store) -> sp.csr_matrix:
        if not store[0]:
            return sp.csr_matrix((self.m, self.n))
        rows, cols, vals = (np.concatenate(part) for part in store)
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.m, self.n))

    def block(self, name: str) -> SeparableQuadraticBlock:
        return SeparableQuadraticBlock(name, self._matrix(self._quad), self._matrix(self._lin), self.c)


def kinematic_equalities(layout: VariableLayout, pos: str, vel: str, acc: str, dt: float,
                         closure=0.0) -> Tuple[sp.csr_matrix, np.ndarray]:
    """
    Rows of v[n] = v[n-1] + a[n-1] dt and q[n] = q[n-1] + v[n-1] dt + a[n-1] dt^2 / 2
    for n = 1..N, plus q[N] - q[0] = closure, v[N] = v[0] and a[N] = a[0].
    """
    P, V, Acc = (layout.indices(name).reshape(layout.shape(name)[0], -1) for name in (pos, vel, acc))
    N, dims = P.shape[0] - 1, P.shape[1]
    closure = np.broadcast_to(np.asarray(closure, dtype=float), (dims,))
    n = np.arange(1, N + 1)
    rows, cols, vals = [], [], []

    def add(r, c, v):
        r, c, v = np.broadcast_arrays(r, c, float(v))
        rows.append(r.ravel())
        cols.append(c.ravel())
        vals.append(v.ravel())

    row = 0
    for d in range(dims):
        r = row + np.arange(N)
        add(r, V[n, d], 1.0)
        add(r, V[n - 1, d], -1.0)
        add(r, Acc[n - 1, d], -dt)
        row += N
        r = row + np.arange(N)
        add(r, P[n, d], 1.0)
        add(r, P[n - 1, d], -1.0)
        add(r, V[n - 1, d], -dt)
        add(r, Acc[n - 1, d], -0.5 * dt * dt)
        row += N

    targets = []
    for d in range(dims):
        for idx, target in ((P, closure[d]), (V, 0.0), (Acc, 0.0)):
            add(np.array([row]), idx[N, d], 1.0)
            add(np.array([row]), idx[0, d], -1.0)
            targets.append(target)
            row += 1

    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(row, layout.size))
    b = np.concatenate([np.zeros(2 * N * dims), targets])
    return A, b


def _triplets_to_matrix(n: int, rows, cols, vals) -> sp.csr_matrix:
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))


# Propulsion models in the decision variables

class CartesianPropulsion:
    """sum_n c1 ||v[n]||^3 + c2 / V1[n] + (c2 / g^2) ||a[n]||^2 / V1[n] over slots 1..N; convex for V1 > 0"""

    def __init__(self, scenario: Scenario, layout: VariableLayout):
        self.scenario = scenario
        self.n = layout.size
        self.v = layout.indices("v")[1:]
        self.a = layout.indices("a")[1:]
        self.V1 = layout.indices("V1")
        self.kappa = scenario.c2 / scenario.g**2

    def value(self, x: np.ndarray) -> float:
        V1 = x[self.V1]
        if np.any(V1 <= 0):
            return np.inf
        speed = np.linalg.norm(x[self.v], axis=1)
        accel_sq = (x[self.a] ** 2).sum(axis=1)
        return float((self.scenario.c1 * speed**3 + self.scenario.c2 / V1 + self.kappa * accel_sq / V1).sum())

    def gradient(self, x: np.ndarray) -> np.ndarray:
        v, a, V1 = x[self.v], x[self.a], x[self.V1]
        speed = np.linalg.norm(v, axis=1)
        accel_sq = (a**2).sum(axis=1)
        grad = np.zeros(self.n)
        grad[self.v] = 3.0 * self.scenario.c1 * speed[:, None] * v
        grad[self.a] = 2.0 * self.kappa * a / V1[:, None]
        grad[self.V1] = -(self.scenario.c2 + self.kappa * accel_sq) / V1**2
        return grad

    def hessian(self, x: np.ndarray) -> sp.csr_matrix:
        v, a, V1 = x[self.v], x[self.a], x[self.V1]
        speed = np.maximum(np.linalg.norm(v, axis=1), 1e-12)
        accel_sq = (a**2).sum(axis=1)
        c1, kappa = self.scenario.c1, self.kappa
        rows, cols, vals = [], [], []
        for i in range(2):
            for j in range(2):
                # 3 c1 (||v|| I + v v^T / ||v||)
                rows.append(self.v[:, i])
                cols.append(self.v[:, j])
                vals.append(3.0 * c1 * ((speed if i == j else 0.0) + v[:, i] * v[:, j] / speed))
            rows.append(self.a[:, i])
            cols.append(self.a[:, i])
            vals.append(2.0 * kappa / V1)
            cross = -2.0 * kappa * a[:, i] / V1**2
            rows += [self.a[:, i], self.V1]
            cols += [self.V1, self.a[:, i]]
            vals += [cross, cross]
        rows.append(self.V1)
        cols.append(self.V1)
        vals.append(2.0 * (self.scenario.c2 + kappa * accel_sq) / V1**3)
        vals = [np.broadcast_to(val, self.V1.shape) for val in vals]
        return _triplets_to_matrix(self.n, rows, cols, vals)


class RadiusPropulsion:
    """Circular propulsion power summed over slots as a function of the radius, at a fixed angular profile"""

    def __init__(self, scenario: Scenario, layout: VariableLayout, omega: np.ndarray, alpha: np.ndarray):
        self.scenario = scenario
        self.n = layout.size
        self.r = int(layout.indices("r")[0])
        self.omega, self.alpha = np.asarray(omega, dtype=float), np.asarray(alpha, dtype=float)

    def value(self, x: np.ndarray) -> float:
        r = x[self.r]
        if r <= 0:
            return np.inf
        return float(circular_propulsion_power(self.scenario, r, self.omega, self.alpha).sum())

    def gradient(self, x: np.ndarray) -> np.ndarray:
        r, w, al = x[self.r], self.omega, self.alpha
        c1, c2, g2 = self.scenario.c1, self.scenario.c2, self.scenario.g**2
        grad = np.zeros(self.n)
        grad[self.r] = (3 * c1 * r**2 * w**3 - c2 / (r**2 * w) + c2 * w**3 / g2 + c2 * al**2 / (g2 * w)).sum()
        return grad

    def hessian(self, x: np.ndarray) -> sp.csr_matrix:
        r, w = x[self.r], self.omega
        c1, c2 = self.scenario.c1, self.scenario.c2
        second = (6 * c1 * r * w**3 + 2 * c2 / (r**3 * w)).sum()
        return sp.csr_matrix(([second], ([self.r], [self.r])), shape=(self.n, self.n))


class AngularPropulsion:
    """Circular propulsion power summed over slots 1..N in (omega, alpha) at a fixed radius; convex for omega > 0"""

    def __init__(self, scenario: Scenario, layout: VariableLayout, radius: float):
        self.scenario = scenario
        self.n = layout.size
        self.r = radius
        self.w = layout.indices("omega")[1:]
        self.al = layout.indices("alpha")[1:]

    def value(self, x: np.ndarray) -> float:
        w = x[self.w]
        if np.any(w <= 0):
            return np.inf
        return float(circular_propulsion_power(self.scenario, self.r, w, x[self.al]).sum())

    def gradient(self, x: np.ndarray) -> np.ndarray:
        r, w, al = self.r, x[self.w], x[self.al]
        c1, c2, g2 = self.scenario.c1, self.scenario.c2, self.scenario.g**2
        grad = np.zeros(self.n)
        grad[self.w] = 3 * c1 * r**3 * w**2 - c2 / (r * w**2) + 3 * c2 * r * w**2 / g2 - c2 * r * al**2 / (g2 * w**2)
        grad[self.al] = 2 * c2 * r * al / (g2 * w)
        return grad

    def hessian(self, x: np.ndarray) -> sp.csr_matrix:
        r, w, al = self.r, x[self.w], x[self.al]
        c1, c2, g2 = self.scenario.c1, self.scenario.c2, self.scenario.g**2
        ww = 6 * c1 * r**3 * w + 2 * c2 / (r * w**3) + 6 * c2 * r * w / g2 + 2 * c2 * r * al**2 / (g2 * w**3)
        wa = -2 * c2 * r * al / (g2 * w**2)
        aa = 2 * c2 * r / (g2 * w)
        rows = [self.w, self.w, self.al, self.al]
        cols = [self.w, self.al, self.w, self.al]
        return _triplets_to_matrix(self.n, rows, cols, [ww, wa, wa, aa])


def _limit_block(name: str, model, limit: float, slots: int) -> FunctionBlock:
    """(model / N - limit) / limit <= 0"""
    scale = 1.0 / (slots * limit)

    def values(x):
        return np.array([model.value(x) * scale - 1.0])

    def jacobian(x):
        return sp.csr_matrix(model.gradient(x)[None, :] * scale)

    def hessian(x, w):
        return model.hessian(x) * (w[0] * scale)

    return FunctionBlock(name, ConstraintKind.convex_smooth, 1, values, jacobian, hessian)


def _epigraph_objective(layout: VariableLayout, epigraph: str, lambda_m: Optional[float], power) -> Objective:
    """tau, or eta - lambda * mu for the Dinkelbach-parameterized problems"""
    e = int(layout.indices(epigraph)[0])
    unit = np.zeros(layout.size)
    unit[e] = 1.0
    if lambda_m is None:
        return Objective.linear(unit)
    return Objective(
        value=lambda x: float(x[e] - lambda_m * power.value(x)),
        gradient=lambda x: unit - lambda_m * power.gradient(x),
        hessian=lambda x: power.hessian(x) * (-lambda_m),
    )


# Rate rows

class RateBlock(FunctionBlock):
    """
    Per-GN rate rows  w_e e - (1/N) sum_n [log2(1 + sum_j X_j[n]) - Rub_k[n]] <= 0,
    where Rub_k is the linearized interference rate and X are the received powers.
    """

    def __init__(self, layout: VariableLayout, power: str, epigraph: str, coeffs: surrogates.SurrogateCoeffs,
                 weight: float):
        self.idx = layout.indices(power)
        self.e = int(layout.indices(epigraph)[0])
        self.weight = weight
        self.gamma = coeffs.gamma_hat
        K, N = self.idx.shape
        self.K, self.N = K, N
        self.offset = (np.log2(1.0 + coeffs.interference) - self.gamma * coeffs.interference).mean(axis=1)
        self.n = layout.size
        super().__init__("rate", ConstraintKind.convex_smooth, K, self._values, self._jacobian, self._hessian)

    def surrogate_rates(self, x: np.ndarray) -> np.ndarray:
        """Concave lower bound on each GN's average rate"""
        X = x[self.idx]
        total = X.sum(axis=0)
        if np.any(total <= -1.0):
            return np.full(self.K, -np.inf)
        interference = total[None, :] - X
        return (np.log2(1.0 + total)[None, :] - self.gamma * interference).mean(axis=1) - self.offset

    def _values(self, x):
        return self.weight * x[self.e] - self.surrogate_rates(x)

    def _jacobian(self, x):
        X = x[self.idx]
        slope = surrogates.LOG2E / (1.0 + X.sum(axis=0))
        K, N = self.K, self.N
        # d rate_k / d X_j[n] = (slope[n] - gamma_k[n] [j != k]) / N
        dense = np.zeros((K, K, N))
        dense += slope[None, None, :]
        dense -= self.gamma[:, None, :]
        dense[np.arange(K), np.arange(K), :] += self.gamma
        rows = np.repeat(np.arange(K), K * N)
        cols = np.tile(self.idx.ravel(), K)
        J = sp.csr_matrix((-dense.ravel() / N, (rows, cols)), shape=(K, self.n))
        return J + sp.csr_matrix((np.full(K, self.weight), (np.arange(K), np.full(K, self.e))), shape=(K, self.n))

    def _hessian(self, x, w):
        X = x[self.idx]
        curvature = w.sum() * surrogates.LOG2E / (1.0 + X.sum(axis=0)) ** 2 / self.N
        K, N = self.K, self.N
        rows = np.repeat(self.idx, K, axis=0).reshape(K, K, N)
        cols = np.tile(self.idx, (K, 1)).reshape(K, K, N)
        vals = np.broadcast_to(curvature, (K, K, N))
        return sp.csr_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=(self.n, self.n))

    def best_epigraph(self, x: np.ndarray) -> float:
        """Largest e the rate rows allow at x"""
        return float(self.surrogate_rates(x).min() / self.weight)


# Warm starts

def _inside(value, lo, hi, relative: float, scale) -> np.ndarray:
    """Clip into [lo + m, hi - m] with m = min(relative * scale, (hi - lo) / 4)"""
    margin = np.minimum(relative * np.asarray(scale, dtype=float), np.maximum(hi - lo, 0.0) / 4.0)
    return np.minimum(np.maximum(value, lo + margin), hi - margin)


def _finish(name, layout, objective, blocks, rate, x0, x_exp, epigraph, A_eq=None, b_eq=None):
    e = int(layout.indices(epigraph)[0])
    best = rate.best_epigraph(x0)
    x0[e] = best - EPIGRAPH_MARGIN * max(1.0, abs(best))
    x_exp[e] = rate.best_epigraph(x_exp)

    def epigraph_value(x):
        x = np.array(x, dtype=float)
        x[e] = rate.best_epigraph(x)
        return objective.value(x)

    return SubProblem(
        name=name, layout=layout, objective=objective, constraints=blocks, x0=x0,
        A_eq=A_eq, b_eq=b_eq, x_expansion=x_exp, epigraph=epigraph_value,
    )


# Cartesian builders

def _build_cartesian(scenario: Scenario, expansion: FlightPlan, epigraph: str, lambda_m: Optional[float],
                     audit_tol: float) -> SubProblem:
    K, N = scenario.num_gns, scenario.slots
    traj, link = expansion.trajectory, expansion.link
    checked = scenario if lambda_m is None else scenario.with_prop_limit(None)
    report = audit(checked, traj, link)
    if not report.is_feasible(audit_tol):
        bad = {k: v for k, v in report.normalized().items() if v > audit_tol}
        raise InfeasiblePlanError(f"expansion point is not feasible: {bad}")

    layout = VariableLayout([
        ("q", (N + 1, 2)), ("v", (N + 1, 2)), ("a", (N + 1, 2)), ("G", (K, N)), ("V1", (N,)), (epigraph, (1,)),
    ])
    n = layout.size
    q_idx, v_idx, a_idx = layout.indices("q")[1:], layout.indices("v")[1:], layout.indices("a")[1:]
    G_idx, V1_idx = layout.indices("G"), layout.indices("V1")

    q_l, v_l = traj.q, traj.v
    G_l = link.G
    speed_l = np.linalg.norm(v_l[1:], axis=1)
    coeffs = surrogates.cartesian_coeffs(scenario, q_l[1:], G_l)
    coeffs.check(scenario)

    H2 = scenario.altitude**2
    peak = scenario.peak_power * scenario.ref_snr
    g_scale = peak / H2
    v_scale, a_scale = scenario.v_max**2, scenario.a_max**2
    slot_rows = np.arange(N)
    blocks = []

    rows = _Rows(K * N, n)
    rows.lin(np.arange(K * N), G_idx.ravel(), -1.0 / g_scale)
    blocks.append(rows.block("G_nonneg"))

    # G - P gamma0 * lb(q) <= 0
    gn = np.broadcast_to(scenario.gn_array[:, None, :], (K, N, 2))
    quad, lin, const = surrogates.kernel_quadratic_form(gn, q_l[1:][None, :, :] - gn, 1.0, H2)
    rows = _Rows(K * N, n)
    kn = np.arange(K * N).reshape(K, N)
    rows.lin(kn, G_idx, 1.0 / g_scale)
    for d in range(2):
        rows.quad(kn, q_idx[None, :, d], peak * quad / g_scale)
        rows.lin(kn, q_idx[None, :, d], peak * lin[..., d] / g_scale)
    rows.c[:] = (peak * const / g_scale).ravel()
    blocks.append(rows.block("G_upper"))

    rows = _Rows(N, n)
    rows.lin(slot_rows, V1_idx, -1.0 / scenario.v_max)
    rows.c[:] = scenario.v_min / scenario.v_max
    blocks.append(rows.block("V1_lower"))

    # V1^2 <= -||v||^2 + 2 v_l . (2 v - v_l)
    rows = _Rows(N, n)
    rows.quad(slot_rows, V1_idx, 1.0 / v_scale)
    for d in range(2):
        rows.quad(slot_rows, v_idx[:, d], 1.0 / v_scale)
        rows.lin(slot_rows, v_idx[:, d], -4.0 * v_l[1:, d] / v_scale)
    rows.c[:] = 2.0 * speed_l**2 / v_scale
    blocks.append(rows.block("V1_speed"))

    rows = _Rows(N, n)
    for d in range(2):
        rows.quad(slot_rows, v_idx[:, d], 1.0 / v_scale)
    rows.c[:] = -1.0
    blocks.append(rows.block("speed_max"))

    rows = _Rows(N, n)
    for d in range(2):
        rows.quad(slot_rows, a_idx[:, d], 1.0 / a_scale)
    rows.c[:] = -1.0
    blocks.append(rows.block("accel_max"))

    power = CartesianPropulsion(scenario, layout)
    if lambda_m is None and scenario.prop_limit is not None:
        blocks.append(_limit_block("prop_limit", power, scenario.prop_limit, N))

    rate = RateBlock(layout, "G", epigraph, coeffs, 1.0 if lambda_m is None else 1.0 / N)
    blocks.append(rate)

    A_eq, b_eq = kinematic_equalities(layout, "q", "v", "a", scenario.slot_len)
    objective = _epigraph_objective(layout, epigraph, lambda_m, power)

    g_max = peak * surrogates.kernel_value(q_l[1:][None, :, :] - gn, 1.0, H2)
    x0 = layout.pack({
        "q": q_l, "v": v_l, "a": traj.a,
        "G": _inside(G_l, 0.0, g_max, RECEIVED_MARGIN, g_scale),
        "V1": _inside(speed_l, scenario.v_min, speed_l, SLACK_MARGIN, scenario.v_max),
    })
    x_exp = layout.pack({"q": q_l, "v": v_l, "a": traj.a, "G": G_l, "V1": speed_l})
    name = "p12" if lambda_m is None else "p23"
    return _finish(name, layout, objective, blocks, rate, x0, x_exp, epigraph, A_eq, b_eq)


def build_p12(scenario: Scenario, expansion: FlightPlan, audit_tol: float = 1e-4) -> SubProblem:
    """Min-rate step: maximize tau over trajectory, received powers and speed slack"""
    return _build_cartesian(scenario, expansion, "tau", None, audit_tol)


def build_p23(scenario: Scenario, expansion: FlightPlan, lambda_m: float, audit_tol: float = 1e-4) -> SubProblem:
    """Dinkelbach step: maximize eta - lambda_m * mu, with lambda_m in (bits/Hz per slot) / W"""
    if lambda_m < 0:
        raise ValueError(f"lambda_m must be non-negative, got {lambda_m}")
    return _build_cartesian(scenario, expansion, "eta", float(lambda_m), audit_tol)


# Circular builders

def radius_bounds(scenario: Scenario, omega: np.ndarray, alpha: np.ndarray) -> Tuple[float, float]:
    """Radius box for a fixed angular profile (slots 1..N)"""
    lo = scenario.v_min / omega.min()
    hi = min(scenario.v_max / omega.max(), scenario.a_max / np.sqrt(omega**4 + alpha**2).max())
    return float(lo), float(hi)


def _circular_rows(scenario: Scenario, layout: VariableLayout, S_idx: np.ndarray, var_idx: np.ndarray,
                   quad, lin, const) -> list:
    """S >= 0 and S <= P gamma0 * lb(var) for a scalar variable per (k, n)"""
    K, N = S_idx.shape
    n = layout.size
    peak = scenario.peak_power * scenario.ref_snr
    s_scale = peak / scenario.altitude**2
    kn = np.arange(K * N).reshape(K, N)

    lower = _Rows(K * N, n)
    lower.lin(kn, S_idx, -1.0 / s_scale)

    upper = _Rows(K * N, n)
    upper.lin(kn, S_idx, 1.0 / s_scale)
    var_idx = np.broadcast_to(var_idx, (K, N))
    upper.quad(kn, var_idx, peak * quad / s_scale)
    upper.lin(kn, var_idx, peak * lin / s_scale)
    upper.c[:] = (peak * const / s_scale).ravel()
    return [lower.block("S_nonneg"), upper.block("S_upper")]


def build_p31(scenario: Scenario, state: CircularState, lambda_m: Optional[float] = None) -> SubProblem:
    """Radius step of the circular baseline at a fixed angular profile"""
    K, N = scenario.num_gns, scenario.slots
    epigraph = "tau" if lambda_m is None else "eta"
    theta, omega, alpha = state.theta[1:], state.omega[1:], state.alpha[1:]
    r_l = state.radius
    r_lo, r_hi = radius_bounds(scenario, omega, alpha)
    if not r_lo < r_hi:
        raise InfeasiblePlanError(f"angular profile admits no radius: [{r_lo:.3f}, {r_hi:.3f}]")

    layout = VariableLayout([("r", (1,)), ("S", (K, N)), (epigraph, (1,))])
    n = layout.size
    r_idx = int(layout.indices("r")[0])
    coeffs = surrogates.radius_coeffs(scenario, r_l, theta, state.zeta, state.phi, state.S)
    coeffs.check(scenario)

    b = coeffs.b_check[..., None]
    quad, lin, const = surrogates.kernel_quadratic_form(b, r_l - b, 1.0, coeffs.A_check)
    blocks = _circular_rows(scenario, layout, layout.indices("S"), np.full((K, N), r_idx), quad, lin[..., 0], const)

    box = _Rows(2, n)
    box.lin([0, 1], [r_idx, r_idx], [1.0 / r_hi, -1.0 / r_hi])
    box.c[:] = [-1.0, r_lo / r_hi]
    blocks.append(box.block("radius_box"))

    power = RadiusPropulsion(scenario, layout, omega, alpha)
    if lambda_m is None and scenario.prop_limit is not None:
        blocks.append(_limit_block("prop_limit", power, scenario.prop_limit, N))

    rate = RateBlock(layout, "S", epigraph, coeffs, 1.0 if lambda_m is None else 1.0 / N)
    blocks.append(rate)
    objective = _epigraph_objective(layout, epigraph, lambda_m, power)

    r0 = float(_inside(r_l, r_lo, r_hi, SLACK_MARGIN, r_hi))
    peak = scenario.peak_power * scenario.ref_snr
    s_hi = peak * surrogates.kernel_lb((r0 - b), (r_l - b), 1.0, coeffs.A_check)
    S0 = _inside(state.S, 0.0, s_hi, RECEIVED_MARGIN, peak / scenario.altitude**2)
    x0 = layout.pack({"r": [r0], "S": S0})
    x_exp = layout.pack({"r": [r_l], "S": state.S})
    return _finish("p31", layout, objective, blocks, rate, x0, x_exp, epigraph)


def _accel_block(layout: VariableLayout, radius: float, a_max: float) -> FunctionBlock:
    """(r^2 alpha^2 + r^2 omega^4) / a_max^2 - 1 <= 0 for slots 1..N, convex in (omega, alpha)"""
    w_idx, al_idx = layout.indices("omega")[1:], layout.indices("alpha")[1:]
    N, n = w_idx.size, layout.size
    c = radius**2 / a_max**2
    rows = np.arange(N)

    def values(x):
        return c * (x[al_idx] ** 2 + x[w_idx] ** 4) - 1.0

    def jacobian(x):
        data = np.concatenate([4 * c * x[w_idx] ** 3, 2 * c * x[al_idx]])
        return sp.csr_matrix((data, (np.tile(rows, 2), np.concatenate([w_idx, al_idx]))), shape=(N, n))

    def hessian(x, w):
        data = np.concatenate([12 * c * x[w_idx] ** 2 * w, 2 * c * w])
        idx = np.concatenate([w_idx, al_idx])
        return sp.csr_matrix((data, (idx, idx)), shape=(n, n))

    return FunctionBlock("accel_max", ConstraintKind.convex_smooth, N, values, jacobian, hessian)


def build_p32(scenario: Scenario, state: CircularState, lambda_m: Optional[float] = None) -> SubProblem:
    """Angle step of the circular baseline at a fixed radius"""
    K, N = scenario.num_gns, scenario.slots
    epigraph = "tau" if lambda_m is None else "eta"
    r = state.radius

    layout = VariableLayout([
        ("theta", (N + 1,)), ("omega", (N + 1,)), ("alpha", (N + 1,)), ("S", (K, N)), (epigraph, (1,)),
    ])
    n = layout.size
    theta_idx, w_idx = layout.indices("theta")[1:], layout.indices("omega")[1:]
    theta_l = state.theta[1:]
    coeffs = surrogates.angle_coeffs(scenario, r, theta_l, state.zeta, state.phi, state.S)
    coeffs.check(scenario)

    u_l = np.sin(theta_l[None, :] - state.phi[:, None])[..., None]
    quad, lin, const = surrogates.kernel_quadratic_form(coeffs.b_hat[..., None], u_l, coeffs.rho_hat, coeffs.A_hat)
    blocks = _circular_rows(scenario, layout, layout.indices("S"), theta_idx[None, :], quad, lin[..., 0], const)

    w_min, w_max = scenario.v_min / r, scenario.v_max / r
    rows = _Rows(2 * N, n)
    rows.lin(np.arange(N), w_idx, -1.0 / w_max)
    rows.lin(N + np.arange(N), w_idx, 1.0 / w_max)
    rows.c[:N] = w_min / w_max
    rows.c[N:] = -1.0
    blocks.append(rows.block("omega_box"))
    blocks.append(_accel_block(layout, r, scenario.a_max))

    power = AngularPropulsion(scenario, layout, r)
    if lambda_m is None and scenario.prop_limit is not None:
        blocks.append(_limit_block("prop_limit", power, scenario.prop_limit, N))

    rate = RateBlock(layout, "S", epigraph, coeffs, 1.0 if lambda_m is None else 1.0 / N)
    blocks.append(rate)
    objective = _epigraph_objective(layout, epigraph, lambda_m, power)
    A_eq, b_eq = kinematic_equalities(layout, "theta", "omega", "alpha", scenario.slot_len, closure=2 * np.pi)

    peak = scenario.peak_power * scenario.ref_snr
    s_hi = surrogates.smax(scenario, r, theta_l[None, :], state.zeta[:, None], state.phi[:, None])
    base = {"theta": state.theta, "omega": state.omega, "alpha": state.alpha}
    x0 = layout.pack({**base, "S": _inside(state.S, 0.0, s_hi, RECEIVED_MARGIN, peak / scenario.altitude**2)})
    x_exp = layout.pack({**base, "S": state.S})
    return _finish("p32", layout, objective, blocks, rate, x0, x_exp, epigraph, A_eq, b_eq)
