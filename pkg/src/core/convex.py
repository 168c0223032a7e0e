"""
Small convex programs behind the power allocation and mode selection steps.

A ConvexProgram maximises c^T x subject to

    G x <= h                                    linear rows
    sum_k (w_k^T x + d_k)^2 + l^T x + c0
        - sum_j g_j sqrt(x_i(j) x_k(j)) <= 0    SmoothConstraint
    Tr((F0 + sum_k x_k F_k)^-1) <= bound        TraceInverseConstraint, 2x2 F

Two back ends solve the same program. SMOOTH hands value, gradient and
Hessian oracles to the cvxopt interior-point solver for nonlinear convex
programs; the 2x2 trace inverse is the closed form (f11 + f22) / det.
SCHUR builds the cvxpy model with [[F, I], [I, S]] >> 0, Tr S <= bound and
solves it with Clarabel (SCS when Clarabel is missing). Both report the KKT
residual of the smooth formulation at the returned point.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import cvxpy as cp
import numpy as np
from cvxopt import matrix, solvers
from loguru import logger

from src.core.exceptions import ConvergenceFailure, InfeasibleProblemError, SimulationError
from src.utils.constants import SOLVER_SETTINGS, CrlbForm

@dataclass
class SmoothConstraint:
    squares: List[Tuple[np.ndarray, float]] = field(default_factory=list)
    linear: Optional[np.ndarray] = None
    constant: float = 0.0
    sqrt_products: List[Tuple[float, int, int]] = field(default_factory=list)  # (weight >= 0, i, k)
    name: str = ""

    def _linear(self, n: int) -> np.ndarray:
        return np.zeros(n) if self.linear is None else self.linear

    def in_domain(self, x: np.ndarray) -> bool:
        return all(x[i] > 0 and x[k] > 0 for _, i, k in self.sqrt_products)

    def value(self, x: np.ndarray) -> float:
        total = self._linear(x.size) @ x + self.constant
        for w, d in self.squares:
            total += (w @ x + d) ** 2
        for g, i, k in self.sqrt_products:
            total -= g * np.sqrt(max(x[i], 0.0) * max(x[k], 0.0))
        return float(total)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        grad = self._linear(x.size).astype(float).copy()
        for w, d in self.squares:
            grad += 2.0 * (w @ x + d) * w
        for g, i, k in self.sqrt_products:
            if i == k:
                grad[i] -= g
                continue
            root = max(np.sqrt(max(x[i], 0.0) * max(x[k], 0.0)), 1e-12)
            grad[i] -= 0.5 * g * x[k] / root
            grad[k] -= 0.5 * g * x[i] / root
        return grad

    def hessian(self, x: np.ndarray) -> np.ndarray:
        H = np.zeros((x.size, x.size))
        for w, _ in self.squares:
            H += 2.0 * np.outer(w, w)
        for g, i, k in self.sqrt_products:
            if i == k:
                continue
            root = max(np.sqrt(max(x[i], 0.0) * max(x[k], 0.0)), 1e-12)
            # -sqrt(x_i x_k) is convex on the positive orthant
            H[i, i] += 0.25 * g * x[k] ** 2 / root ** 3
            H[k, k] += 0.25 * g * x[i] ** 2 / root ** 3
            H[i, k] -= 0.25 * g / root
            H[k, i] -= 0.25 * g / root
        return H

    def expression(self, x):
        terms = [self._linear(x.size) @ x + self.constant]
        terms += [cp.square(w @ x + d) for w, d in self.squares]
        for g, i, k in self.sqrt_products:
            if i == k:
                terms.append(-g * x[i])
            else:
                terms.append(-g * cp.geo_mean(cp.hstack([x[i], x[k]])))
        return cp.sum(cp.hstack(terms))

@dataclass
class TraceInverseConstraint:
    """Tr(F(x)^-1) <= bound, or <= x[slack] when a slack index is given"""
    base: np.ndarray                      # F0, 2x2
    slopes: Dict[int, np.ndarray]         # k -> F_k, 2x2
    bound: float = 1.0
    slack: Optional[int] = None
    name: str = ""

    def matrix(self, x: np.ndarray) -> np.ndarray:
        F = self.base.astype(float).copy()
        for k, Fk in self.slopes.items():
            F += x[k] * Fk
        return 0.5 * (F + F.T)

    def in_domain(self, x: np.ndarray) -> bool:
        F = self.matrix(x)
        return bool(F[0, 0] > 0 and F[0, 0] * F[1, 1] - F[0, 1] ** 2 > 0)

    def _limit(self, x: np.ndarray) -> float:
        return float(x[self.slack]) if self.slack is not None else self.bound

    def value(self, x: np.ndarray) -> float:
        F = self.matrix(x)
        det = F[0, 0] * F[1, 1] - F[0, 1] ** 2
        return float((F[0, 0] + F[1, 1]) / det) - self._limit(x)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        W = np.linalg.inv(self.matrix(x))
        grad = np.zeros(x.size)
        for k, Fk in self.slopes.items():
            grad[k] = -np.trace(W @ Fk @ W)
        if self.slack is not None:
            grad[self.slack] -= 1.0
        return grad

    def hessian(self, x: np.ndarray) -> np.ndarray:
        W = np.linalg.inv(self.matrix(x))
        H = np.zeros((x.size, x.size))
        keys = list(self.slopes)
        products = {k: W @ self.slopes[k] @ W for k in keys}
        for a, k in enumerate(keys):
            for l in keys[a:]:
                value = 2.0 * np.trace(products[k] @ self.slopes[l] @ W)
                H[k, l] = H[l, k] = value
        return H

    def schur_constraints(self, x):
        F = self.base + sum(x[k] * Fk for k, Fk in self.slopes.items())
        S = cp.Variable((2, 2), symmetric=True)
        block = cp.bmat([[F, np.eye(2)], [np.eye(2), S]])
        limit = x[self.slack] if self.slack is not None else self.bound
        return [0.5 * (block + block.T) >> 0], cp.trace(S) <= limit

@dataclass
class ConvexProgram:
    num_vars: int
    objective: np.ndarray                 # maximise objective @ x
    G: np.ndarray
    h: np.ndarray
    smooth: List[SmoothConstraint] = field(default_factory=list)
    trace_inverse: List[TraceInverseConstraint] = field(default_factory=list)
    start: Optional[np.ndarray] = None    # point in the domain of every nonlinear constraint
    labels: Sequence[str] = ()

    @property
    def nonlinear(self) -> list:
        return [*self.smooth, *self.trace_inverse]

    def in_domain(self, x: np.ndarray) -> bool:
        return all(c.in_domain(x) for c in self.nonlinear)

    def violation(self, x: np.ndarray) -> float:
        """Largest constraint violation at x (0 when feasible)"""
        worst = float(np.max(self.G @ x - self.h, initial=0.0))
        for c in self.nonlinear:
            usable = isinstance(c, SmoothConstraint) or c.in_domain(x)
            value = c.value(x) if usable else float('inf')
            worst = max(worst, value)
        return max(worst, 0.0)

@dataclass
class ConvexSolution:
    x: np.ndarray
    objective: float
    kkt_residual: float
    violation: float
    nonlinear_multipliers: np.ndarray
    linear_multipliers: np.ndarray
    form: CrlbForm
    status: str = "optimal"

def kkt_residual(problem: ConvexProgram, x: np.ndarray, nonlinear_multipliers: np.ndarray,
                 linear_multipliers: np.ndarray) -> float:
    """Relative stationarity plus complementary slackness of min -c^T x"""
    lam = np.clip(np.asarray(nonlinear_multipliers, dtype=float), 0.0, None)
    mu = np.clip(np.asarray(linear_multipliers, dtype=float), 0.0, None)
    stationarity = -problem.objective.astype(float).copy()
    slackness = 0.0
    for weight, c in zip(lam, problem.nonlinear):
        stationarity += weight * c.gradient(x)
        slackness += abs(weight * c.value(x))
    if problem.G.size:
        stationarity += problem.G.T @ mu
        slackness += float(np.abs(mu * (problem.G @ x - problem.h)).sum())
    scale = max(1.0, float(np.linalg.norm(problem.objective)))
    return float((np.linalg.norm(stationarity) + slackness) / scale)

def _accept(problem: ConvexProgram, x: np.ndarray, nonlinear_multipliers: np.ndarray,
            linear_multipliers: np.ndarray, form: CrlbForm, status: str,
            feasibility_tolerance: float, kkt_tolerance: float) -> ConvexSolution:
    """Solution record once the point passes the feasibility and KKT checks"""
    violation = problem.violation(x)
    residual = kkt_residual(problem, x, nonlinear_multipliers, linear_multipliers)
    if violation > feasibility_tolerance or residual > kkt_tolerance:
        raise ConvergenceFailure(
            f"{form.value} solve ended with status '{status}', violation {violation:.2e}, "
            f"KKT residual {residual:.2e}",
            best_iterate=x,
        )
    return ConvexSolution(
        x=x,
        objective=float(problem.objective @ x),
        kkt_residual=residual,
        violation=violation,
        nonlinear_multipliers=nonlinear_multipliers,
        linear_multipliers=linear_multipliers,
        form=form,
        status=status,
    )

def _solve_smooth(problem: ConvexProgram, max_iterations: int, tolerance: float,
                  feasibility_tolerance: float, kkt_tolerance: float) -> ConvexSolution:
    constraints = problem.nonlinear
    n = problem.num_vars
    start = problem.start if problem.start is not None else np.full(n, 1e-3)
    if not problem.in_domain(start):
        raise SimulationError("Start point is outside the domain of the nonlinear constraints")

    def F(x=None, z=None):
        if x is None:
            return len(constraints), matrix(start.astype(float))
        point = np.array(x).ravel()
        if not problem.in_domain(point):
            return None
        values = [-float(problem.objective @ point)] + [c.value(point) for c in constraints]
        grads = np.vstack([-problem.objective] + [c.gradient(point) for c in constraints])
        if z is None:
            return matrix(values), matrix(grads)
        weights = np.array(z).ravel()
        H = sum(w * c.hessian(point) for w, c in zip(weights[1:], constraints)) if constraints else np.zeros((n, n))
        return matrix(values), matrix(grads), matrix(np.asarray(H, dtype=float))

    options = {
        'show_progress': False,
        'maxiters': max_iterations,
        'abstol': tolerance * 1e-2,
        'reltol': tolerance,
        'feastol': min(1e-8, feasibility_tolerance),
    }
    try:
        result = solvers.cp(F, G=matrix(problem.G.astype(float)), h=matrix(problem.h.astype(float)),
                            options=options)
    except (ValueError, ArithmeticError) as e:
        raise ConvergenceFailure(f"Interior-point solve failed: {e}", best_iterate=start) from e

    x = np.array(result['x']).ravel()
    znl = np.array(result['znl']).ravel() if constraints else np.zeros(0)
    zl = np.array(result['zl']).ravel()
    if result['status'] != 'optimal':
        logger.debug(f"Interior-point status '{result['status']}', checking the returned point")
    return _accept(problem, x, znl, zl, CrlbForm.SMOOTH, result['status'], feasibility_tolerance, kkt_tolerance)

def _solve_schur(problem: ConvexProgram, max_iterations: int, tolerance: float,
                 feasibility_tolerance: float, kkt_tolerance: float) -> ConvexSolution:
    x = cp.Variable(problem.num_vars)
    linear = [problem.G @ x <= problem.h] if problem.G.size else []
    smooth = [c.expression(x) <= 0 for c in problem.smooth]
    psd, traces = [], []
    for c in problem.trace_inverse:
        blocks, trace = c.schur_constraints(x)
        psd += blocks
        traces.append(trace)

    model = cp.Problem(cp.Maximize(problem.objective @ x), linear + smooth + psd + traces)
    installed = cp.installed_solvers()
    if 'CLARABEL' in installed:
        solver, settings = cp.CLARABEL, {'max_iter': max_iterations}
    else:
        solver, settings = cp.SCS, {'max_iters': 100 * max_iterations, 'eps_abs': tolerance, 'eps_rel': tolerance}
    try:
        model.solve(solver=solver, **settings)
    except cp.error.SolverError as e:
        raise ConvergenceFailure(f"{solver} failed: {e}", best_iterate=problem.start) from e

    if model.status == cp.INFEASIBLE:
        raise InfeasibleProblemError(f"Conic program reported {model.status}")
    best = np.asarray(x.value, dtype=float) if x.value is not None else problem.start
    # inaccurate statuses carry no usable certificate or multipliers
    if x.value is None or model.status != cp.OPTIMAL:
        raise ConvergenceFailure(f"{solver} stopped with status '{model.status}'", best_iterate=best)

    # Tr S <= bound carries the multiplier of Tr(F^-1) <= bound
    lam = [float(np.atleast_1d(c.dual_value)[0]) for c in smooth]
    lam += [float(np.atleast_1d(c.dual_value)[0]) for c in traces]
    mu = np.asarray(linear[0].dual_value, dtype=float).ravel() if linear else np.zeros(0)
    return _accept(problem, best, np.array(lam), mu, CrlbForm.SCHUR, model.status,
                   feasibility_tolerance, kkt_tolerance)

def solve_convex_subproblem(problem: ConvexProgram, form: CrlbForm = CrlbForm.SMOOTH,
                            max_iterations: int = 200, tolerance: float = 1e-8,
                            feasibility_tolerance: float = SOLVER_SETTINGS['feasibility_tolerance'],
                            kkt_tolerance: float = SOLVER_SETTINGS['kkt_tolerance']) -> ConvexSolution:
    """Solve one convex program with the requested CRLB representation.

    The returned point has primal violation <= feasibility_tolerance and a
    relative KKT residual <= kkt_tolerance; anything else raises
    ConvergenceFailure carrying the solver's last point.
    """
    solve = _solve_schur if form == CrlbForm.SCHUR else _solve_smooth
    solution = solve(problem, max_iterations, tolerance, feasibility_tolerance, kkt_tolerance)
    logger.debug(
        f"Convex subproblem ({solution.form.value}): objective {solution.objective:.6g}, "
        f"violation {solution.violation:.1e}, KKT {solution.kkt_residual:.1e}"
    )
    return solution
