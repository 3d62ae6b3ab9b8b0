# uavplan/services/subsolver.py
"""
Primal log-barrier interior-point solver for the convex subproblems.

A SubProblem maximizes a smooth concave objective subject to smooth convex
inequalities f_i(x) <= 0 and affine equalities A x = b. Equalities are
eliminated once with a null-space basis, so Newton runs on an unconstrained
reduced vector y with x = x_base + Z y.
"""
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.linalg import LinAlgError, cho_factor, cho_solve, lstsq, null_space

from uavplan.errors import SolverPreconditionError

logger = logging.getLogger(__name__)

# Barrier schedule
T_INITIAL = 1.0
T_GROWTH = 10.0
NEWTON_TOL = 1e-8
MAX_NEWTON_STEPS = 600
# Backtracking line search
ARMIJO = 0.25
SHRINK = 0.5
MIN_STEP = 1e-14
# Diagonal shifts tried when the Newton matrix is not numerically SPD
REGULARIZATION = (0.0, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2)
# Phase I stops once every constraint is below -PHASE1_MARGIN
PHASE1_MARGIN = 1e-6


# Variable layout

class VariableLayout:
    """Named blocks of one flat decision vector"""

    def __init__(self, blocks: Sequence[Tuple[str, Tuple[int, ...]]]):
        self._shapes: Dict[str, Tuple[int, ...]] = {}
        self._slices: Dict[str, slice] = {}
        offset = 0
        for name, shape in blocks:
            shape = tuple(int(s) for s in np.atleast_1d(shape))
            size = int(np.prod(shape))
            self._shapes[name] = shape
            self._slices[name] = slice(offset, offset + size)
            offset += size
        self.size = offset

    @property
    def names(self) -> List[str]:
        return list(self._shapes)

    def shape(self, name: str) -> Tuple[int, ...]:
        return self._shapes[name]

    def slice(self, name: str) -> slice:
        return self._slices[name]

    def indices(self, name: str) -> np.ndarray:
        """Flat indices of a block, shaped like the block"""
        s = self._slices[name]
        return np.arange(s.start, s.stop).reshape(self._shapes[name])

    def split(self, x: np.ndarray) -> Dict[str, np.ndarray]:
        return {name: np.array(x[self._slices[name]]).reshape(shape) for name, shape in self._shapes.items()}

    def pack(self, values: Dict[str, np.ndarray]) -> np.ndarray:
        x = np.zeros(self.size)
        for name, value in values.items():
            x[self._slices[name]] = np.asarray(value, dtype=float).ravel()
        return x


# Constraints and objective

class ConstraintKind(str, Enum):
    """How a constraint block is certified convex"""
    affine = "affine"
    convex_smooth = "convex_smooth"
    soc_representable = "soc_representable"


class ConstraintBlock(ABC):
    """A vector of convex constraints f(x) <= 0 sharing one name"""

    def __init__(self, name: str, kind: ConstraintKind, size: int):
        self.name = name
        self.kind = kind
        self.size = size

    @abstractmethod
    def values(self, x: np.ndarray) -> np.ndarray:
        """f(x); entries are +inf outside the block's domain"""

    @abstractmethod
    def jacobian(self, x: np.ndarray) -> sp.csr_matrix:
        """(size, n) Jacobian"""

    @abstractmethod
    def hessian(self, x: np.ndarray, weights: np.ndarray) -> sp.spmatrix:
        """sum_i weights_i * Hessian of f_i"""


class SeparableQuadraticBlock(ConstraintBlock):
    """f(x) = D (x * x) + B x + c with D >= 0 elementwise, so every row is convex"""

    def __init__(self, name: str, D: sp.spmatrix, B: sp.spmatrix, c: np.ndarray):
        D = sp.csr_matrix(D)
        if D.nnz and D.data.min() < 0:
            raise ValueError(f"constraint block {name!r} has a negative curvature coefficient")
        kind = ConstraintKind.convex_smooth if D.nnz else ConstraintKind.affine
        super().__init__(name, kind, B.shape[0])
        self.D = D
        self.B = sp.csr_matrix(B)
        self.c = np.asarray(c, dtype=float)

    def values(self, x: np.ndarray) -> np.ndarray:
        return self.D @ (x * x) + self.B @ x + self.c

    def jacobian(self, x: np.ndarray) -> sp.csr_matrix:
        return sp.csr_matrix(self.D.multiply(2.0 * x[None, :]) + self.B)

    def hessian(self, x: np.ndarray, weights: np.ndarray) -> sp.spmatrix:
        return sp.diags(2.0 * (self.D.T @ weights))


class FunctionBlock(ConstraintBlock):
    """Constraint block given by callables"""

    def __init__(self, name: str, kind: ConstraintKind, size: int,
                 values: Callable[[np.ndarray], np.ndarray],
                 jacobian: Callable[[np.ndarray], sp.spmatrix],
                 hessian: Callable[[np.ndarray, np.ndarray], sp.spmatrix]):
        super().__init__(name, kind, size)
        self._values, self._jacobian, self._hessian = values, jacobian, hessian

    def values(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self._values(x), dtype=float)

    def jacobian(self, x: np.ndarray) -> sp.csr_matrix:
        return sp.csr_matrix(self._jacobian(x))

    def hessian(self, x: np.ndarray, weights: np.ndarray) -> sp.spmatrix:
        return self._hessian(x, weights)


@dataclass
class Objective:
    """Concave objective to maximize; hessian=None means linear"""

    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian: Optional[Callable[[np.ndarray], sp.spmatrix]] = None

    @classmethod
    def linear(cls, c: np.ndarray) -> "Objective":
        c = np.asarray(c, dtype=float)
        return cls(value=lambda x: float(c @ x), gradient=lambda x: c)


@dataclass
class SubProblem:
    """
    One convex subproblem: maximize objective(x) s.t. every block <= 0 and A_eq x = b_eq.

    x0 is the warm start; x_expansion is the point the surrogates were built
    at, and epigraph(x) gives the surrogate objective with the epigraph
    variable set to its largest allowed value.
    """

    name: str
    layout: VariableLayout
    objective: Objective
    constraints: List[ConstraintBlock]
    x0: np.ndarray
    A_eq: Optional[sp.spmatrix] = None
    b_eq: Optional[np.ndarray] = None
    x_expansion: Optional[np.ndarray] = None
    epigraph: Optional[Callable[[np.ndarray], float]] = None

    @property
    def num_constraints(self) -> int:
        return sum(block.size for block in self.constraints)

    def constraint_values(self, x: np.ndarray) -> Dict[str, np.ndarray]:
        with np.errstate(all="ignore"):
            return {block.name: block.values(x) for block in self.constraints}

    def worst_constraint(self, x: np.ndarray) -> Tuple[str, int, float]:
        """(block, row, value) of the largest constraint value; non-finite counts as +inf"""
        worst = ("", -1, -np.inf)
        for name, vals in self.constraint_values(x).items():
            vals = np.where(np.isfinite(vals), vals, np.inf)
            if vals.size and vals.max() > worst[2]:
                worst = (name, int(vals.argmax()), float(vals.max()))
        return worst


# Results

class SolveStatus(str, Enum):
    """Outcome of one subproblem solve"""
    optimal = "optimal"
    max_iter = "max_iter"
    infeasible = "infeasible"
    numerical_error = "numerical_error"


@dataclass
class SolveResult:
    """Solution of a SubProblem"""

    status: SolveStatus
    x: np.ndarray
    point: Dict[str, np.ndarray]
    objective: float
    kkt: Dict[str, float] = field(default_factory=dict)
    duals: Dict[str, np.ndarray] = field(default_factory=dict)
    iterations: int = 0
    message: str = ""

    @property
    def usable(self) -> bool:
        """True when x is a strictly feasible point the caller may move to"""
        return self.status in (SolveStatus.optimal, SolveStatus.max_iter)


# Reduced problems seen by the Newton loop

class _ReducedProblem:
    """The SubProblem in null-space coordinates y"""

    def __init__(self, sub: SubProblem, x_base: np.ndarray, Z: np.ndarray):
        self.sub = sub
        self.x_base = x_base
        self.Z = Z
        self.dim = Z.shape[1]
        self.num_constraints = sub.num_constraints

    def x(self, y: np.ndarray) -> np.ndarray:
        return self.x_base + self.Z @ y

    def objective(self, y):
        return self.sub.objective.value(self.x(y))

    def objective_gradient(self, y):
        return self.Z.T @ self.sub.objective.gradient(self.x(y))

    def objective_hessian(self, y):
        if self.sub.objective.hessian is None:
            return np.zeros((self.dim, self.dim))
        H = self.sub.objective.hessian(self.x(y))
        return self.Z.T @ (H @ self.Z)

    def constraints(self, y):
        x = self.x(y)
        with np.errstate(all="ignore"):
            return np.concatenate([block.values(x) for block in self.sub.constraints])

    def constraint_jacobian(self, y):
        x = self.x(y)
        J = sp.vstack([block.jacobian(x) for block in self.sub.constraints], format="csr")
        return np.asarray(J @ self.Z)

    def constraint_hessian(self, y, weights):
        x = self.x(y)
        H = sp.csr_matrix((x.size, x.size))
        offset = 0
        for block in self.sub.constraints:
            H = H + block.hessian(x, weights[offset:offset + block.size])
            offset += block.size
        return self.Z.T @ (H @ self.Z)


class _PhaseOneProblem:
    """Minimize s subject to f_i(y) <= s and s >= -1, in variables (y, s)"""

    def __init__(self, base: _ReducedProblem):
        self.base = base
        self.dim = base.dim + 1
        self.num_constraints = base.num_constraints + 1

    def objective(self, ys):
        return -ys[-1]

    def objective_gradient(self, ys):
        grad = np.zeros(self.dim)
        grad[-1] = -1.0
        return grad

    def objective_hessian(self, ys):
        return np.zeros((self.dim, self.dim))

    def constraints(self, ys):
        return np.append(self.base.constraints(ys[:-1]) - ys[-1], -ys[-1] - 1.0)

    def constraint_jacobian(self, ys):
        J = self.base.constraint_jacobian(ys[:-1])
        top = np.hstack([J, -np.ones((J.shape[0], 1))])
        bottom = np.zeros((1, self.dim))
        bottom[0, -1] = -1.0
        return np.vstack([top, bottom])

    def constraint_hessian(self, ys, weights):
        H = np.zeros((self.dim, self.dim))
        H[:-1, :-1] = self.base.constraint_hessian(ys[:-1], weights[:-1])
        return H


# Newton machinery

def _barrier_value(problem, y: np.ndarray, t: float) -> float:
    f = problem.constraints(y)
    if not np.all(np.isfinite(f)) or np.any(f >= 0.0):
        return np.inf
    value = -t * problem.objective(y) - np.log(-f).sum()
    return value if np.isfinite(value) else np.inf


def _newton_direction(hessian: np.ndarray, gradient: np.ndarray) -> Optional[np.ndarray]:
    """Solve H d = -g with Jacobi scaling and a growing diagonal shift; None if every shift fails"""
    scale = np.sqrt(np.maximum(np.diag(hessian), 1e-300))
    scaled = hessian / np.outer(scale, scale)
    rhs = -gradient / scale
    for shift in REGULARIZATION:
        try:
            factor = cho_factor(scaled + shift * np.eye(scaled.shape[0]), lower=True, check_finite=True)
        except (LinAlgError, ValueError):
            continue
        if shift:
            logger.debug("Newton matrix regularized with shift %.0e", shift)
        return cho_solve(factor, rhs) / scale
    return None


def _centering(problem, y, t, newton_tol, max_steps, stop=None):
    """Newton's method on the barrier function at fixed t; returns (y, steps, ok)"""
    for step in range(max_steps):
        if stop is not None and stop(y):
            return y, step, True
        f = problem.constraints(y)
        J = problem.constraint_jacobian(y)
        inv = 1.0 / (-f)
        grad = -t * problem.objective_gradient(y) + J.T @ inv
        hess = -t * problem.objective_hessian(y) + (J.T * inv**2) @ J + problem.constraint_hessian(y, inv)
        dy = _newton_direction(hess, grad)
        if dy is None:
            logger.debug("Newton system not SPD after the largest shift")
            return y, step, False
        slope = grad @ dy
        if -slope / 2.0 <= newton_tol:
            return y, step, True
        current = _barrier_value(problem, y, t)
        s = 1.0
        while _barrier_value(problem, y + s * dy, t) > current + ARMIJO * s * slope:
            s *= SHRINK
            if s < MIN_STEP:
                # No further progress in floating point
                return y, step, True
        y = y + s * dy
    return y, max_steps, True


def _stationarity(problem, y: np.ndarray, t: float) -> Tuple[float, np.ndarray]:
    f = problem.constraints(y)
    duals = 1.0 / (t * (-f))
    grad0 = problem.objective_gradient(y)
    residual = grad0 - problem.constraint_jacobian(y).T @ duals
    return float(np.abs(residual).max(initial=0.0) / max(1.0, np.abs(grad0).max(initial=0.0))), duals


def _barrier_method(problem, y0: np.ndarray, tol: float, stop=None):
    """Returns (y, t, iterations, status)"""
    y, t, total = y0, T_INITIAL, 0
    m = problem.num_constraints
    while True:
        budget = MAX_NEWTON_STEPS - total
        if budget <= 0:
            return y, t, total, SolveStatus.max_iter
        y, steps, ok = _centering(problem, y, t, NEWTON_TOL, budget, stop)
        total += steps
        logger.debug("barrier t=%.1e newton steps=%d objective=%.10g", t, steps, problem.objective(y))
        if not ok:
            return y, t, total, SolveStatus.numerical_error
        if stop is not None and stop(y):
            return y, t, total, SolveStatus.optimal
        if m / t <= tol:
            break
        if total >= MAX_NEWTON_STEPS:
            return y, t, total, SolveStatus.max_iter
        t *= T_GROWTH

    # Polish the last stage until the scaled stationarity residual is below tol
    if stop is None:
        polish_left = 50
        while _stationarity(problem, y, t)[0] > tol and polish_left > 0:
            y_next, steps, ok = _centering(problem, y, t, 0.0, min(5, polish_left))
            polish_left -= max(steps, 1)
            total += steps
            if not ok or steps == 0 or np.array_equal(y_next, y):
                break
            y = y_next
    return y, t, total, SolveStatus.optimal


# Entry point

def _eliminate_equalities(sub: SubProblem, x0: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Null-space basis Z and a point x_base on A x = b near x0; only columns touched by A are dense"""
    n = sub.layout.size
    if sub.A_eq is None or sub.A_eq.shape[0] == 0:
        return x0.copy(), np.eye(n)

    A = sp.csc_matrix(sub.A_eq)
    cols = np.unique(A.nonzero()[1])
    free = np.setdiff1d(np.arange(n), cols)
    A_c = A[:, cols].toarray()
    Z_c = null_space(A_c)

    Z = np.zeros((n, Z_c.shape[1] + free.size))
    Z[np.ix_(cols, np.arange(Z_c.shape[1]))] = Z_c
    Z[free, Z_c.shape[1] + np.arange(free.size)] = 1.0

    x_base = x0.copy()
    residual = A @ x0 - sub.b_eq
    if np.abs(residual).max() > 0.0:
        correction, *_ = lstsq(A_c, residual)
        x_base[cols] -= correction
        left = np.abs(A @ x_base - sub.b_eq).max()
        if left > 1e-8 * max(1.0, np.abs(sub.b_eq).max()):
            raise SolverPreconditionError(f"{sub.name}: equality constraints are inconsistent ({left:.2e})",
                                          constraint="equalities")
    return x_base, Z


def _result(sub: SubProblem, reduced: _ReducedProblem, y, t, iterations, status, message="") -> SolveResult:
    x = reduced.x(y)
    kkt, duals_by_block = {}, {}
    if status in (SolveStatus.optimal, SolveStatus.max_iter):
        stationarity, duals = _stationarity(reduced, y, t)
        f = reduced.constraints(y)
        eq = 0.0 if sub.A_eq is None else float(np.abs(sub.A_eq @ x - sub.b_eq).max(initial=0.0))
        kkt = {
            "stationarity": stationarity,
            "primal": max(float(np.max(f, initial=-np.inf)), 0.0, eq),
            "complementarity": float(np.abs(duals * f).max(initial=0.0)),
        }
        offset = 0
        for block in sub.constraints:
            duals_by_block[block.name] = duals[offset:offset + block.size]
            offset += block.size
    return SolveResult(
        status=status,
        x=x,
        point=sub.layout.split(x),
        objective=float(sub.objective.value(x)),
        kkt=kkt,
        duals=duals_by_block,
        iterations=iterations,
        message=message,
    )


def solve(sub: SubProblem, tol: float = 1e-6, restore_interior: bool = False) -> SolveResult:
    """
    Maximize sub.objective over the feasible set, starting from sub.x0.

    The warm start must satisfy every inequality strictly. With
    restore_interior=True a phase-I problem looks for such a point first and
    an infeasible status is returned when none exists; otherwise a
    SolverPreconditionError names the offending block.
    """
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    x_base, Z = _eliminate_equalities(sub, np.asarray(sub.x0, dtype=float))
    reduced = _ReducedProblem(sub, x_base, Z)
    y0 = np.zeros(reduced.dim)

    name, row, worst = sub.worst_constraint(x_base)
    if worst >= 0.0:
        if not restore_interior:
            raise SolverPreconditionError(
                f"{sub.name}: warm start violates constraint {name!r} row {row} (value {worst:.3e})", constraint=name
            )
        y0, found = _phase_one(reduced)
        if not found:
            logger.warning("%s: no strictly feasible point found (worst block %r)", sub.name, name)
            return _result(sub, reduced, y0, 1.0, 0, SolveStatus.infeasible, f"phase I failed on {name!r}")

    start = reduced.objective(y0)
    y, t, iterations, status = _barrier_method(reduced, y0, tol)
    result = _result(sub, reduced, y, t, iterations, status)
    if status == SolveStatus.optimal and result.kkt["stationarity"] > tol:
        result.status = SolveStatus.max_iter
        result.message = f"stationarity {result.kkt['stationarity']:.2e} above tolerance"
    if result.usable and result.objective < start - tol * max(1.0, abs(start)):
        logger.warning("%s: objective fell from %.10g to %.10g; keeping the warm start", sub.name, start,
                       result.objective)
        result = _result(sub, reduced, y0, t, iterations, SolveStatus.max_iter,
                         f"objective fell below the warm start ({result.objective:.10g} < {start:.10g})")
    logger.debug("%s: %s after %d Newton steps, objective %.10g", sub.name, result.status.value, iterations,
                 result.objective)
    return result


def _phase_one(reduced: _ReducedProblem) -> Tuple[np.ndarray, bool]:
    f0 = reduced.constraints(np.zeros(reduced.dim))
    if not np.all(np.isfinite(f0)):
        return np.zeros(reduced.dim), False
    logger.warning("%s: warm start not strictly feasible (max %.3e), running phase I", reduced.sub.name, f0.max())

    phase = _PhaseOneProblem(reduced)
    ys0 = np.append(np.zeros(reduced.dim), f0.max() + 1.0)

    def interior(ys):
        return reduced.constraints(ys[:-1]).max() <= -PHASE1_MARGIN

    ys, _, _, _ = _barrier_method(phase, ys0, 1e-9, stop=interior)
    y = ys[:-1]
    return y, bool(interior(ys))
