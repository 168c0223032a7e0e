"""
Convex subproblem back ends
"""
import numpy as np
import pytest

from src.core.convex import (
    ConvexProgram, SmoothConstraint, TraceInverseConstraint, kkt_residual, solve_convex_subproblem,
)
from src.core.exceptions import ConvergenceFailure, SimulationError
from src.utils.constants import CrlbForm

def trace_program():
    """max -x0 - x1 s.t. 1/x0 + 1/x1 <= 2, optimum x = (1, 1)"""
    constraint = TraceInverseConstraint(
        np.zeros((2, 2)), {0: np.diag([1.0, 0.0]), 1: np.diag([0.0, 1.0])}, bound=2.0,
    )
    return ConvexProgram(2, np.array([-1.0, -1.0]), -np.eye(2), np.zeros(2), [], [constraint], np.array([2.0, 2.0]))

def disc_program():
    """max x0 s.t. x0^2 + x1^2 <= 1, x >= 0"""
    e0, e1 = np.eye(2)
    constraint = SmoothConstraint([(e0, 0.0), (e1, 0.0)], None, -1.0)
    return ConvexProgram(2, np.array([1.0, 0.0]), -np.eye(2), np.zeros(2), [constraint], [], np.array([0.1, 0.1]))

def numeric_gradient(f, x, step=1e-6):
    grad = np.zeros(x.size)
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = step
        grad[i] = (f(x + e) - f(x - e)) / (2 * step)
    return grad

@pytest.mark.parametrize("form", [CrlbForm.SMOOTH, CrlbForm.SCHUR])
def test_trace_inverse_program(form):
    solution = solve_convex_subproblem(trace_program(), form)
    assert solution.objective == pytest.approx(-2.0, abs=1e-4)
    np.testing.assert_allclose(solution.x, [1.0, 1.0], atol=1e-3)
    assert solution.form == form

def test_smooth_program_optimum():
    problem = disc_program()
    solution = solve_convex_subproblem(problem, CrlbForm.SMOOTH)
    assert solution.objective == pytest.approx(1.0, abs=1e-5)
    assert solution.violation <= 1e-7
    assert solution.kkt_residual <= 1e-6

def test_forms_agree():
    smooth = solve_convex_subproblem(trace_program(), CrlbForm.SMOOTH)
    schur = solve_convex_subproblem(trace_program(), CrlbForm.SCHUR)
    assert abs(smooth.objective - schur.objective) < 1e-4

def test_smooth_constraint_derivatives():
    """Gradient and Hessian of the sqrt-product term against finite differences"""
    x = np.array([0.7, 1.9, 0.4])
    w = np.array([0.3, -0.2, 0.5])
    constraint = SmoothConstraint([(w, 0.1)], np.array([0.2, 0.0, -1.0]), 0.5, [(1.5, 0, 1), (0.8, 2, 1)])
    np.testing.assert_allclose(constraint.gradient(x), numeric_gradient(constraint.value, x), rtol=1e-6)
    hessian = np.vstack([numeric_gradient(lambda y: constraint.gradient(y)[i], x) for i in range(3)])
    np.testing.assert_allclose(constraint.hessian(x), hessian, rtol=1e-5, atol=1e-8)
    # convex on the positive orthant
    assert np.linalg.eigvalsh(constraint.hessian(x)).min() > -1e-10

def test_trace_inverse_derivatives():
    constraint = TraceInverseConstraint(
        np.array([[0.5, 0.1], [0.1, 0.3]]),
        {0: np.array([[1.0, 0.2], [0.2, 0.1]]), 1: np.array([[0.1, -0.1], [-0.1, 2.0]])},
        bound=3.0,
    )
    x = np.array([0.8, 0.6])
    np.testing.assert_allclose(constraint.gradient(x), numeric_gradient(constraint.value, x), rtol=1e-6)
    hessian = np.vstack([numeric_gradient(lambda y: constraint.gradient(y)[i], x) for i in range(2)])
    np.testing.assert_allclose(constraint.hessian(x), hessian, rtol=1e-5)

def test_violation_and_domain():
    problem = trace_program()
    assert problem.violation(np.array([2.0, 2.0])) == 0.0
    assert problem.violation(np.array([0.5, 0.5])) == pytest.approx(2.0)
    assert not problem.in_domain(np.zeros(2))
    assert problem.violation(np.zeros(2)) == float('inf')

def test_kkt_residual_at_optimum():
    """Stationarity holds with multiplier 1 at x = (1, 1)"""
    problem = trace_program()
    residual = kkt_residual(problem, np.array([1.0, 1.0]), np.array([1.0]), np.zeros(2))
    assert residual == pytest.approx(0.0, abs=1e-12)

def test_start_outside_domain():
    problem = trace_program()
    problem.start = np.zeros(2)
    with pytest.raises(SimulationError):
        solve_convex_subproblem(problem, CrlbForm.SMOOTH)

@pytest.mark.parametrize("form", [CrlbForm.SMOOTH, CrlbForm.SCHUR])
def test_returned_points_meet_acceptance(form):
    solution = solve_convex_subproblem(trace_program(), form)
    assert solution.violation <= 1e-7
    assert solution.kkt_residual <= 1e-6

@pytest.mark.parametrize("form", [CrlbForm.SMOOTH, CrlbForm.SCHUR])
def test_rejected_point_is_carried(form):
    """A point failing the KKT check comes back on the exception"""
    with pytest.raises(ConvergenceFailure) as info:
        solve_convex_subproblem(trace_program(), form, kkt_tolerance=-1.0)
    np.testing.assert_allclose(info.value.best_iterate, [1.0, 1.0], atol=1e-3)

def test_truncated_solve_fails_with_iterate():
    with pytest.raises(ConvergenceFailure) as info:
        solve_convex_subproblem(trace_program(), CrlbForm.SMOOTH, max_iterations=1)
    assert info.value.best_iterate is not None
    assert np.asarray(info.value.best_iterate).shape == (2,)
