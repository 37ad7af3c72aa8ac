"""
Sparse linear solvers used by the split-step integrator.

Matrices that stay fixed for a whole run (mass, pressure) are factorized once
through FactorizedSystem; the iterative helpers are there for the
"iterative" solver mode and for one-off systems.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from errors import BreakdownError, InvalidSystemError, IterationLimitError

SPD_RETRIES = 3


@dataclass
class SolveResult:
    x: np.ndarray
    residual: float  # ||A x - b||_2, recomputed after the solve
    iterations: int = 0
    method: str = "direct"
    multiplier: float = 0.0  # Lagrange multiplier of a bordered solve

    @property
    def converged(self) -> bool:
        return np.isfinite(self.residual)


def _residual(A, x: np.ndarray, rhs: np.ndarray) -> float:
    return float(np.linalg.norm(A @ x - rhs))


def _jacobi(A) -> spla.LinearOperator:
    d = np.asarray(A.diagonal(), dtype=float)
    d = np.where(d == 0.0, 1.0, d)
    return spla.LinearOperator(A.shape, matvec=lambda v: v / d, dtype=float)


class _Counter:
    def __init__(self):
        self.count = 0

    def __call__(self, *_):
        self.count += 1


def solve_spd(A, rhs: np.ndarray, tol: float = 1e-12, maxiter: Optional[int] = None, x0=None) -> SolveResult:
    """Preconditioned conjugate gradients for a symmetric positive definite A.

    Returns x with ||A x - b|| <= tol ||b||.
    """
    A = sp.csr_matrix(A)
    rhs = np.asarray(rhs, dtype=float)
    if A.shape[0] != A.shape[1] or A.shape[0] != rhs.size:
        raise InvalidSystemError(f"shape mismatch: matrix {A.shape}, right side {rhs.shape}")
    if np.any(A.diagonal() <= 0.0):
        raise InvalidSystemError("matrix has a non-positive diagonal entry, it is not SPD")
    bnorm = float(np.linalg.norm(rhs))
    if bnorm == 0.0:
        return SolveResult(np.zeros_like(rhs), 0.0, 0, "cg")
    maxiter = maxiter or 10 * A.shape[0]
    target = tol * bnorm
    counter = _Counter()
    x = None if x0 is None else np.asarray(x0, dtype=float)
    M = _jacobi(A)
    for _ in range(SPD_RETRIES):
        x, info = spla.cg(A, rhs, x0=x, rtol=tol, atol=0.0, maxiter=maxiter, M=M, callback=counter)
        if info < 0:
            raise BreakdownError(f"CG breakdown (info={info})")
        res = _residual(A, x, rhs)
        if res <= target:
            return SolveResult(x, res, counter.count, "cg")
        if info > 0:
            break
    raise IterationLimitError(
        f"CG stopped at residual {res:.3e} after {counter.count} iterations (target {target:.3e})",
        residual=res,
        iterations=counter.count,
    )


def solve_general(
    A,
    rhs: np.ndarray,
    tol: float = 1e-10,
    maxiter: Optional[int] = None,
    restart: int = 50,
    fallback: bool = True,
) -> SolveResult:
    """Restarted GMRES with a sparse LU fallback.

    Singular systems raise BreakdownError instead of returning garbage.
    """
    A = sp.csr_matrix(A)
    rhs = np.asarray(rhs, dtype=float)
    if A.shape[0] != A.shape[1] or A.shape[0] != rhs.size:
        raise InvalidSystemError(f"shape mismatch: matrix {A.shape}, right side {rhs.shape}")
    bnorm = float(np.linalg.norm(rhs))
    if bnorm == 0.0:
        return SolveResult(np.zeros_like(rhs), 0.0, 0, "gmres")
    target = tol * bnorm
    counter = _Counter()
    x, info = spla.gmres(
        A,
        rhs,
        rtol=tol,
        atol=0.0,
        restart=min(restart, A.shape[0]),
        maxiter=maxiter or max(20, A.shape[0] // restart + 1),
        M=_jacobi(A),
        callback=counter,
        callback_type="pr_norm",
    )
    res = _residual(A, x, rhs) if np.all(np.isfinite(x)) else np.inf
    if info == 0 and res <= target:
        return SolveResult(x, res, counter.count, "gmres")
    if not fallback:
        raise IterationLimitError(
            f"GMRES stopped at residual {res:.3e} after {counter.count} iterations",
            residual=res,
            iterations=counter.count,
        )
    try:
        x = spla.splu(A.tocsc()).solve(rhs)
    except RuntimeError as e:
        raise BreakdownError(f"matrix is singular: {e}") from e
    res = _residual(A, x, rhs)
    if not np.isfinite(res) or res > np.sqrt(tol) * bnorm:
        raise BreakdownError(f"LU solve left residual {res:.3e}; matrix is numerically singular")
    return SolveResult(x, res, counter.count, "lu")


@dataclass
class BorderedSystem:
    """[[A, c], [b^T, 0]] [p; lam] = [f; 0].

    `column` defaults to `border`; it differs when pressure rows have been
    replaced by boundary equations.
    """

    matrix: sp.spmatrix
    border: np.ndarray
    rhs: np.ndarray
    column: Optional[np.ndarray] = None

    def __post_init__(self):
        self.border = np.asarray(self.border, dtype=float)
        self.rhs = np.asarray(self.rhs, dtype=float)
        if self.column is None:
            self.column = self.border
        n = self.matrix.shape[0]
        if self.border.shape != (n,) or self.rhs.shape != (n,) or np.shape(self.column) != (n,):
            raise InvalidSystemError("bordered system blocks have inconsistent sizes")
        if not np.any(self.border):
            raise InvalidSystemError("border vector is zero")

    @property
    def symmetric(self) -> bool:
        return self.column is self.border or np.array_equal(self.column, self.border)

    def full_matrix(self) -> sp.csc_matrix:
        return bordered_matrix(self.matrix, self.border, self.column)

    def full_rhs(self) -> np.ndarray:
        return np.append(self.rhs, 0.0)


def bordered_matrix(A, border: np.ndarray, column: Optional[np.ndarray] = None) -> sp.csc_matrix:
    column = border if column is None else column
    return sp.bmat(
        [[sp.csr_matrix(A), sp.csr_matrix(np.asarray(column)[:, None])], [sp.csr_matrix(np.asarray(border)[None, :]), None]],
        format="csc",
    )


def solve_bordered(system: BorderedSystem, tol: float = 1e-10, method: str = "direct") -> SolveResult:
    """Solve the mean-constrained system; returns p in x and lam in multiplier.

    method is "direct" (sparse LU), "minres" (symmetric case only) or "gmres".
    """
    K = system.full_matrix()
    rhs = system.full_rhs()
    n = system.matrix.shape[0]
    if method == "minres":
        if not system.symmetric:
            raise InvalidSystemError("MINRES needs a symmetric bordered system")
        counter = _Counter()
        target = 10.0 * tol * max(np.linalg.norm(rhs), 1e-300)
        z = None
        # minres stops on ||r|| <= tol ||A|| ||x||; restarting from z tightens the true residual
        for _ in range(SPD_RETRIES):
            z, info = spla.minres(K, rhs, x0=z, rtol=tol, maxiter=20 * (n + 1), callback=counter)
            res = _residual(K, z, rhs)
            if info != 0 or res <= target:
                break
        if info != 0 or res > target:
            raise IterationLimitError(f"MINRES stopped at residual {res:.3e}", residual=res, iterations=counter.count)
        result = SolveResult(z[:n], res, counter.count, "minres", float(z[n]))
    elif method == "gmres":
        inner = solve_general(K, rhs, tol=tol)
        result = SolveResult(inner.x[:n], inner.residual, inner.iterations, inner.method, float(inner.x[n]))
    elif method == "direct":
        try:
            z = spla.splu(K).solve(rhs)
        except RuntimeError as e:
            raise BreakdownError(f"bordered matrix is singular: {e}") from e
        result = SolveResult(z[:n], _residual(K, z, rhs), 0, "lu", float(z[n]))
    else:
        raise InvalidSystemError(f"unknown bordered solve method {method!r}")
    if not np.all(np.isfinite(result.x)):
        raise BreakdownError("bordered solve produced non-finite values")
    return result


class FactorizedSystem:
    """Sparse LU of a matrix that is solved against many right sides."""

    def __init__(self, A, check_tol: Optional[float] = None):
        self.matrix = sp.csc_matrix(A)
        self.check_tol = check_tol
        try:
            self._lu = spla.splu(self.matrix)
        except RuntimeError as e:
            raise BreakdownError(f"matrix is singular: {e}") from e

    @property
    def shape(self):
        return self.matrix.shape

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        x = self._lu.solve(rhs)
        if not np.all(np.isfinite(x)):
            raise BreakdownError("factorized solve produced non-finite values")
        if self.check_tol is not None and rhs.ndim == 1:
            res = _residual(self.matrix, x, rhs)
            bnorm = float(np.linalg.norm(rhs))
            if res > self.check_tol * max(bnorm, 1.0):
                raise BreakdownError(f"factorized solve residual {res:.3e} exceeds tolerance")
        return x
