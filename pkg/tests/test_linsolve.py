import numpy as np
import pytest
import scipy.sparse as sp

from assembly import assemble_load, assemble_mass, assemble_stiffness
from elements import build_dof_map
from errors import BreakdownError, InvalidSystemError
from linsolve import BorderedSystem, FactorizedSystem, solve_bordered, solve_general, solve_spd


def _laplace_1d(n):
    return sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format="csr")


@pytest.fixture(scope="module")
def neumann(square4):
    space = build_dof_map(square4, 2)
    K = assemble_stiffness(space)
    b = assemble_load(space)
    x = space.dof_coords[:, 0]
    f = assemble_mass(space) @ np.cos(np.pi * x)
    return K, b, f


def test_spd_solve_meets_tolerance():
    A = _laplace_1d(60)
    rhs = np.linspace(1.0, 2.0, 60)
    result = solve_spd(A, rhs, tol=1e-10)
    assert result.method == "cg"
    assert result.residual <= 1e-10 * np.linalg.norm(rhs)
    np.testing.assert_allclose(A @ result.x, rhs, atol=1e-9)


def test_spd_zero_rhs_is_trivial():
    result = solve_spd(_laplace_1d(5), np.zeros(5))
    assert result.iterations == 0
    np.testing.assert_array_equal(result.x, 0.0)


def test_spd_rejects_bad_input():
    A = _laplace_1d(4).tolil()
    A[2, 2] = 0.0
    with pytest.raises(InvalidSystemError):
        solve_spd(A.tocsr(), np.ones(4))
    with pytest.raises(InvalidSystemError):
        solve_spd(_laplace_1d(4), np.ones(3))


def test_general_solve_nonsymmetric():
    n = 40
    A = sp.diags([-1.5 * np.ones(n - 1), 3 * np.ones(n), -0.5 * np.ones(n - 1)], [-1, 0, 1], format="csr")
    rhs = np.ones(n)
    result = solve_general(A, rhs, tol=1e-10)
    assert result.residual <= 1e-8
    np.testing.assert_allclose(A @ result.x, rhs, atol=1e-8)


def test_general_solve_singular_raises():
    A = sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(BreakdownError):
        solve_general(A, np.array([1.0, 0.0]))


def test_bordered_methods_agree(neumann):
    K, b, f = neumann
    system = BorderedSystem(K, b, f)
    direct = solve_bordered(system, method="direct")
    assert abs(b @ direct.x) < 1e-10
    for method in ("minres", "gmres"):
        other = solve_bordered(system, tol=1e-10, method=method)
        np.testing.assert_allclose(other.x, direct.x, atol=1e-6)
        assert other.multiplier == pytest.approx(direct.multiplier, abs=1e-6)


def test_bordered_multiplier_absorbs_incompatible_load(neumann):
    K, b, _ = neumann
    # a constant load has no mean-zero solution; the multiplier takes all of it
    result = solve_bordered(BorderedSystem(K, b, b))
    assert result.multiplier == pytest.approx(1.0, abs=1e-10)
    np.testing.assert_allclose(result.x, 0.0, atol=1e-10)


def test_bordered_argument_errors(neumann):
    K, b, f = neumann
    with pytest.raises(InvalidSystemError):
        BorderedSystem(K, np.zeros_like(b), f)
    with pytest.raises(InvalidSystemError):
        BorderedSystem(K, b[:-1], f)
    column = b.copy()
    column[0] = 0.0
    lopsided = BorderedSystem(K, b, f, column)
    assert not lopsided.symmetric
    with pytest.raises(InvalidSystemError):
        solve_bordered(lopsided, method="minres")
    with pytest.raises(InvalidSystemError):
        solve_bordered(BorderedSystem(K, b, f), method="qr")


def test_factorized_system():
    A = _laplace_1d(30)
    lu = FactorizedSystem(A, check_tol=1e-10)
    rhs = np.arange(30.0)
    np.testing.assert_allclose(A @ lu.solve(rhs), rhs, atol=1e-9)
    assert lu.shape == (30, 30)
    with pytest.raises(BreakdownError):
        FactorizedSystem(sp.csc_matrix((3, 3)))
