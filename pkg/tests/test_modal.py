import cmath
import math

import numpy as np
import pytest

import modal
from errors import DegenerateQuadraticError, MarginalRootError, ModalDomainError
from modal import (
    ModalCase,
    algebraic_invariants,
    alpha_zero_boundary_residual,
    build_Z,
    d2_roots,
    detZ_scan,
    det_Z,
    det_Z_grid,
    eigen_mode,
    interior_residual,
    lambda_inside,
    leading_sigma,
    limit_Z,
    limit_detZ,
    q,
    q1,
    q1_prime,
    q_scan,
    solve_gamma,
    solve_xi,
    verify_q_lemmas,
)


def test_case_validation():
    with pytest.raises(ModalDomainError):
        ModalCase(h=0.0, k=1.0, nu=1.0)
    with pytest.raises(ModalDomainError):
        ModalCase(h=0.1, k=1.0, nu=0.0)
    with pytest.raises(ModalDomainError):
        ModalCase(h=0.1, k=0.0, nu=1.0)


def test_xi_and_gamma_solve_their_equations():
    h, k, nu, s = 0.1, 3.0, 0.5, 1.0 + 2.0j
    xi = solve_xi(h, k)
    assert 4 / h ** 2 * math.sinh(xi * h / 2) ** 2 == pytest.approx(k * k, rel=1e-12)
    assert solve_xi(1e-6, 2.0) == pytest.approx(2.0, rel=1e-9)
    gamma = solve_gamma(h, k, nu, s)
    assert gamma.real > 0
    lhs = 4 / h ** 2 * cmath.sinh(gamma * h / 2) ** 2
    assert abs(lhs - (s / nu + k * k)) < 1e-9 * abs(s / nu + k * k)
    with pytest.raises(ModalDomainError):
        solve_gamma(h, k, nu, -1.0 + 1.0j)


def test_q1_at_zero_is_the_limit():
    case = ModalCase(h=0.1, k=2.0, nu=1.0, s=0.0)
    assert q1(case).real == pytest.approx(q1(case.at(1e-6)).real, rel=1e-4)
    assert q(case).real < 0


def test_q_lemmas_hold():
    report = verify_q_lemmas(0.1, 1.0, ks=[1.0, 5.0, 10.0], s_values=[0.1, 1.0, 10.0, 100.0])
    assert report.ok, report.violations
    assert report.checked == 12
    assert report.max_identity_error < 1e-9


def test_q_lemmas_where_the_squares_nearly_cancel():
    # h k = 1 and s = 0.1: N1^2 is about 25 while 4 h^4 s^2 is 4e-6
    report = verify_q_lemmas(0.1, 1.0, ks=[10.0], s_values=[0.1])
    assert report.ok, report.violations
    assert report.max_identity_error < 1e-12


def test_q_lemmas_on_the_full_scan():
    report = verify_q_lemmas(0.1, 1.0, ks=range(1, 11), s_values=np.linspace(0.1, 100.0, 1000))
    assert report.checked == 10000
    assert report.ok, report.violations[:5]


def test_wrong_derivative_is_still_reported(monkeypatch):
    monkeypatch.setattr(modal, "q1_prime", lambda h, k, nu, s: 1.01 * q1_prime(h, k, nu, s))
    report = verify_q_lemmas(0.1, 1.0, ks=[1.0, 10.0], s_values=[0.1, 5.0])
    assert {v["check"] for v in report.violations} == {"derivative matches differences"}
    assert len(report.violations) == 4


def test_q1_prime_domain():
    assert q1_prime(0.1, 1.0, 1.0, 1.0) < 0
    with pytest.raises(ModalDomainError):
        q1_prime(0.1, 1.0, 1.0, 0.0)


def test_q_scan_rows():
    rows = q_scan(0.1, 1.0, [1.0, 2.0], [0.5, 1.0, 2.0])
    assert len(rows) == 6
    assert all(r["q"] < 0 for r in rows)


def test_d2_roots_without_damping_decouple():
    case = ModalCase(h=0.05, k=2.0, nu=0.5, alpha=0.0, s=1.5)
    first, plus, minus = d2_roots(case)
    assert first == pytest.approx(plus)
    assert minus / case.h ** 2 == pytest.approx(case.k ** 2)


def test_degenerate_quadratic():
    # nu = alpha h^2 / 4
    with pytest.raises(DegenerateQuadraticError) as info:
        d2_roots(ModalCase(h=0.2, k=1.0, nu=1.0, alpha=100.0, s=1.0))
    assert info.value.fallback_root != 0


def test_marginal_root_rejected():
    with pytest.raises(MarginalRootError):
        lambda_inside(0.0)
    assert abs(lambda_inside(0.5)) < 1


def test_limit_value():
    assert limit_detZ(1.0, 1.0, 100.0, 1.0).real == pytest.approx(-4.2252, abs=1e-3)
    assert np.linalg.det(limit_Z(1.0, 1.0, 100.0, 1.0)) == pytest.approx(limit_detZ(1.0, 1.0, 100.0, 1.0), rel=1e-9)
    with pytest.raises(ModalDomainError):
        limit_detZ(1.0, 1.0, 0.0, 1.0)


def test_det_z_approaches_the_limit():
    s = 1.0 + 2.0j
    target = limit_detZ(1.0, 1.0, 100.0, s)
    gaps = [abs(det_Z(ModalCase(h, 1.0, 1.0, 100.0, s)) - target) for h in (1e-1, 1e-2, 1e-3)]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 0.05 * abs(target)


def test_det_z_grid_matches_pointwise():
    case = ModalCase(h=0.05, k=2.0, nu=0.7, alpha=40.0)
    s = np.array([0.5 + 1.0j, 2.0 - 3.0j, 4.0])
    grid = det_Z_grid(case, s)
    for value, point in zip(grid, s):
        assert value == pytest.approx(det_Z(case.at(point)), rel=1e-8)
    with pytest.raises(ModalDomainError):
        build_Z(ModalCase(h=0.05, k=2.0, nu=0.7, alpha=0.0))


@pytest.mark.parametrize("n", [0, 1, 2])
def test_eigen_modes_solve_the_interior_equations(n):
    case = ModalCase(h=0.1, k=1.0, nu=1.0, alpha=10.0, s=1.0 + 2.0j)
    U, V, P = eigen_mode(case, n)
    assert np.all(interior_residual(case, U, V, P) < 1e-9)
    # the wall values of the mode make up column n of Z
    np.testing.assert_allclose([U[0], V[0]], build_Z(case)[:2, n], rtol=1e-12)


def test_eigen_mode_index():
    with pytest.raises(ModalDomainError):
        eigen_mode(ModalCase(h=0.1, k=1.0, nu=1.0, alpha=10.0), 3)


def test_undamped_mode_boundary_residual():
    h, k, nu, s = 0.1, 2.0, 1.0, 1.5
    res = alpha_zero_boundary_residual(h, k, nu, s, c_p=2.0)
    assert abs(res[0]) < 1e-14
    assert abs(res[1]) < 1e-14
    expected = 2.0 * q(ModalCase(h, k, nu, 0.0, s)) / h
    assert res[2] == pytest.approx(expected, rel=1e-10)


@pytest.mark.parametrize("r", [1, 2])
def test_leading_sigma_solves_the_limit_system(r):
    k, nu, alpha, s, g0, h = 2.0, 1.0, 50.0, 1.0 + 1.0j, 0.7, 0.1
    sigma = np.array(leading_sigma(k, nu, alpha, s, r, g0, h))
    rhs = limit_Z(k, nu, alpha, s) @ sigma
    np.testing.assert_allclose(rhs, [0.0, 0.0, g0 * h ** r], atol=1e-12)
    with pytest.raises(ModalDomainError):
        leading_sigma(k, nu, alpha, -1.0, r, g0)


def test_algebraic_invariants():
    worst = algebraic_invariants(n_draws=60, seed=1)
    assert worst["draws"] > 0
    assert worst["reciprocal"] < 1e-9
    assert worst["d1_squared"] < 1e-9
    assert worst["quadratic"] < 1e-9


def test_det_z_scan():
    case = ModalCase(h=0.1, k=1.0, nu=1.0, alpha=10.0)
    calls = []
    scan = detZ_scan(case, (-1.0, 1.0), (-1.0, 1.0), n_re=5, n_im=5, progress_cb=lambda *a: calls.append(a))
    assert scan.values.shape == (5, 5)
    assert np.isnan(scan.values[2, 2])
    assert len(list(scan.rows())) == 25
    assert len(calls) == 5
    assert scan.intersection_count() >= 0
