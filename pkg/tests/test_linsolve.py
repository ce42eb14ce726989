import numpy as np
import pytest

from regen_bounds.errors import DomainError, SingularError
from regen_bounds.linsolve import DenseSystem, solve


def test_solve_matches_numpy():
    a = np.array([[4.0, -1.0, 0.5], [-1.0, 3.0, -0.5], [0.2, -0.3, 2.0]])
    b = np.array([1.0, 2.0, 3.0])
    x = solve(DenseSystem(a, b))
    assert np.allclose(x, np.linalg.solve(a, b), atol=1e-12)


def test_solve_pivots_on_zero_diagonal():
    x = solve(DenseSystem([[0.0, 1.0], [1.0, 0.0]], [2.0, 3.0]))
    assert np.allclose(x, [3.0, 2.0])


def test_singular_matrix_reports_pivot():
    with pytest.raises(SingularError) as exc:
        solve(DenseSystem([[1.0, 2.0], [2.0, 4.0]], [1.0, 2.0]))
    assert exc.value.pivot_index == 1


def test_shape_errors():
    with pytest.raises(DomainError):
        DenseSystem(np.ones((2, 3)), np.ones(2))
    with pytest.raises(DomainError):
        DenseSystem(np.eye(2), np.ones(3))


def test_residual_is_small_on_ill_conditioned_system():
    n = 8
    a = np.array([[1.0 / (i + j + 1) for j in range(n)] for i in range(n)]) + np.eye(n) * 1e-6
    b = a @ np.ones(n)
    system = DenseSystem(a, b)
    assert system.residual(solve(system)) < 1e-9
