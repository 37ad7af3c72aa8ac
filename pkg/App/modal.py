"""
Normal-mode analysis of the semi-discrete half-plane model problem.

Laplace variable s, tangential wavenumber k and normal grid spacing h. Modes
decay like lambda^j away from the wall with |lambda| < 1; h^2 D+D- lambda^j =
d2 lambda^j and h D0 lambda^j = d1 lambda^j with d1 = (lambda - 1/lambda) / 2.
All square roots use the principal branch and inner roots are picked by
magnitude.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

from contours import sign_change_cells, zero_contours
from errors import DegenerateQuadraticError, MarginalRootError, ModalDomainError

MARGINAL_TOL = 1e-12
DEGENERATE_TOL = 1e-14

ProgressFn = Callable[[str, int, int], None]


def _noop(*_args, **_kwargs):
    pass


@dataclass(frozen=True)
class ModalCase:
    h: float
    k: float
    nu: float
    alpha: float = 0.0
    s: complex = 1.0

    def __post_init__(self):
        if not self.h > 0:
            raise ModalDomainError(f"grid spacing must be positive, got {self.h}")
        if not self.nu > 0:
            raise ModalDomainError(f"viscosity must be positive, got {self.nu}")
        if self.k == 0:
            raise ModalDomainError("wavenumber k = 0 carries only the constant pressure mode")

    def at(self, s: complex) -> "ModalCase":
        return replace(self, s=s)


def solve_xi(h: float, k: float) -> float:
    """xi > 0 with (4/h^2) sinh^2(xi h / 2) = k^2."""
    if not h > 0 or k == 0:
        raise ModalDomainError("solve_xi needs h > 0 and k != 0")
    return 2.0 / h * math.asinh(abs(k) * h / 2.0)


def _inner_root(b: complex, disc: complex) -> Tuple[complex, complex]:
    r1 = (b + disc) / 2.0
    r2 = (b - disc) / 2.0
    return (r1, r2) if abs(r1) < abs(r2) else (r2, r1)


def exp_neg_gamma_h(h: float, k: float, nu: float, s: complex) -> complex:
    """e^{-gamma h}: the root of magnitude below one of l^2 - (2 + h^2 z) l + 1 with z = s/nu + k^2."""
    s = complex(s)
    if s.real <= 0 and s.imag != 0:
        raise ModalDomainError(f"gamma branch is ambiguous for s = {s} with Re(s) <= 0")
    z = s / nu + k * k
    inner, _ = _inner_root(2.0 + h * h * z, np.sqrt(complex(4.0 * h * h * z + h ** 4 * z * z)))
    if abs(abs(inner) - 1.0) < MARGINAL_TOL:
        raise ModalDomainError(f"no decaying gamma root at s = {s}")
    return complex(inner)


def solve_gamma(h: float, k: float, nu: float, s: complex) -> complex:
    """gamma with Re(gamma) > 0 and (4/h^2) sinh^2(gamma h / 2) = s/nu + k^2."""
    return -np.log(exp_neg_gamma_h(h, k, nu, s)) / h


def q1(case: ModalCase) -> complex:
    """(e^{-xi h} - e^{-gamma h}) / s, continued to s = 0 by its limit."""
    h, k, nu, s = case.h, case.k, case.nu, complex(case.s)
    if s == 0:
        root = math.sqrt(4 * h * h * k * k + h ** 4 * k ** 4)
        return complex((h ** 4 * k * k + 2 * h * h) / (2 * nu * root) - h * h / (2 * nu))
    return (math.exp(-solve_xi(h, k) * h) - exp_neg_gamma_h(h, k, nu, s)) / s


def q(case: ModalCase) -> complex:
    return (math.exp(-solve_xi(case.h, case.k) * case.h) - 1.0) + case.nu * case.k ** 2 * q1(case)


def q1_prime_terms(h: float, k: float, nu: float, s: float) -> Tuple[float, float, float]:
    """(N1, N2, N3) with dq1/ds = -(N1 - N2) / N3 for real s > 0."""
    z = s / nu + k * k
    root_s = math.sqrt(4 * h * h * z + h ** 4 * z * z)
    n1 = 2 * h * h * s + 4 * h * h * k * k * nu + h ** 4 * k ** 4 * nu + h ** 4 * k * k * s
    n2 = nu * math.sqrt(4 * h * h * k * k + h ** 4 * k ** 4) * root_s
    n3 = 2 * nu * s * s * root_s
    return n1, n2, n3


def q1_prime(h: float, k: float, nu: float, s: float) -> float:
    if not s > 0:
        raise ModalDomainError(f"dq1/ds closed form needs real s > 0, got {s}")
    n1, n2, n3 = q1_prime_terms(h, k, nu, s)
    return -(n1 - n2) / n3


def d2_quadratic(case: ModalCase) -> Tuple[complex, complex, complex]:
    """Coefficients (a, b, c) of a d^2 - b d + c = 0 whose roots are the coupled d2 values."""
    h, k, nu, al, s = case.h, case.k, case.nu, case.alpha, complex(case.s)
    a = nu - al * h * h / 4.0
    b = h * h * (s + 2 * nu * k * k + al)
    c = h ** 4 * k * k * (s + nu * k * k + al)
    return a, b, c


def d2_roots(case: ModalCase) -> Tuple[complex, complex, complex]:
    h, k, nu, al, s = case.h, case.k, case.nu, case.alpha, complex(case.s)
    a, b, c = d2_quadratic(case)
    first = h * h * (s + nu * k * k) / nu
    if abs(a) <= DEGENERATE_TOL * nu:
        raise DegenerateQuadraticError(f"nu = alpha h^2 / 4 (nu={nu}, alpha={al}, h={h})", fallback_root=complex(c / b))
    disc = np.sqrt(complex(((al + s) ** 2 + (s + al + nu * k * k) * al * h * h * k * k) * h ** 4))
    return complex(first), complex((b + disc) / (2 * a)), complex((b - disc) / (2 * a))


def quadratic_residual(case: ModalCase, d2: complex) -> float:
    """Relative residual of d2 in the coupled quadratic."""
    a, b, c = d2_quadratic(case)
    scale = abs(a) * abs(d2) ** 2 + abs(b) * abs(d2) + abs(c)
    return abs(a * d2 * d2 - b * d2 + c) / scale


def _lambda_pair(d2):
    d2 = np.asarray(d2, dtype=complex)
    b = 2.0 + d2
    disc = np.sqrt(d2 * (d2 + 4.0))
    r1 = (b + disc) / 2.0
    r2 = (b - disc) / 2.0
    swap = np.abs(r1) >= np.abs(r2)
    inner = np.where(swap, r2, r1)
    outer = np.where(swap, r1, r2)
    return inner, outer


def lambda_inside(d2: complex) -> complex:
    """Root of l^2 - (2 + d2) l + 1 = 0 with |l| < 1."""
    inner, _ = _lambda_pair(d2)
    inner = complex(inner)
    if abs(abs(inner) - 1.0) < MARGINAL_TOL:
        raise MarginalRootError(f"|lambda| = 1 for d2 = {d2}")
    return inner


def lambda_pair(d2: complex) -> Tuple[complex, complex]:
    inner, outer = _lambda_pair(d2)
    return complex(inner), complex(outer)


def d1_of(lam):
    return (lam - 1.0 / lam) / 2.0


def _z_entries(h, k, nu, al, s, d2, lam):
    """Rows [u_0, v_0, pressure wall row] of the three decaying modes; broadcasts over s."""
    d1 = [d1_of(l) for l in lam]
    ik = 1j * k
    w = -(s + 2 * nu * k * k)
    return [
        [-d1[0] / h, ik * np.ones_like(s), ik / al * np.ones_like(s)],
        [ik * np.ones_like(s), d1[1] / h, d1[2] / (h * al)],
        [
            -ik * nu * d1[0] * (lam[0] - 1) / h ** 2,
            (w + nu * d2[1] / h ** 2) * (lam[1] - 1) / h,
            (w + nu * d2[2] / h ** 2) * (lam[2] - 1) / (h * al),
        ],
    ]


def build_Z(case: ModalCase) -> np.ndarray:
    if case.alpha == 0:
        raise ModalDomainError("the coupled determinant needs alpha != 0")
    d2 = d2_roots(case)
    lam = [lambda_inside(d) for d in d2]
    rows = _z_entries(case.h, case.k, case.nu, case.alpha, complex(case.s), d2, lam)
    return np.array(rows, dtype=complex)


def det_Z(case: ModalCase) -> complex:
    return complex(np.linalg.det(build_Z(case)))


def _det3(Z) -> np.ndarray:
    (a, b, c), (d, e, f), (g, hh, i) = Z
    return a * (e * i - f * hh) - b * (d * i - f * g) + c * (d * hh - e * g)


def det_Z_grid(case: ModalCase, s: np.ndarray) -> np.ndarray:
    """Vectorised det(Z) over an array of s; NaN where a root is marginal."""
    h, k, nu, al = case.h, case.k, case.nu, case.alpha
    if al == 0:
        raise ModalDomainError("the coupled determinant needs alpha != 0")
    s = np.asarray(s, dtype=complex)
    a = nu - al * h * h / 4.0
    if abs(a) <= DEGENERATE_TOL * nu:
        raise DegenerateQuadraticError(f"nu = alpha h^2 / 4 (nu={nu}, alpha={al}, h={h})", fallback_root=complex("nan"))
    b = h * h * (s + 2 * nu * k * k + al)
    disc = np.sqrt(((al + s) ** 2 + (s + al + nu * k * k) * al * h * h * k * k) * h ** 4)
    d2 = [h * h * (s + nu * k * k) / nu, (b + disc) / (2 * a), (b - disc) / (2 * a)]
    lam = []
    marginal = np.zeros(s.shape, dtype=bool)
    for d in d2:
        inner, _ = _lambda_pair(d)
        marginal |= np.abs(np.abs(inner) - 1.0) < MARGINAL_TOL
        lam.append(inner)
    det = _det3(_z_entries(h, k, nu, al, s, d2, lam))
    return np.where(marginal, np.nan + 0j, det)


def limit_detZ(k: float, nu: float, alpha: float, s: complex) -> complex:
    """h -> 0 limit of det(Z)."""
    if not alpha > 0:
        raise ModalDomainError(f"limit needs alpha > 0, got {alpha}")
    s = complex(s)
    a = np.sqrt((nu * k * k + s) / nu)
    b = np.sqrt((nu * k * k + alpha + s) / nu)
    return complex(-(alpha + s) * (abs(k) * a - k * k) * b / alpha)


def limit_Z(k: float, nu: float, alpha: float, s: complex) -> np.ndarray:
    """Leading-order boundary matrix as h -> 0."""
    s = complex(s)
    a = np.sqrt((s + nu * k * k) / nu)
    b = np.sqrt((s + nu * k * k + alpha) / nu)
    ik = 1j * k
    ak = abs(k)
    return np.array(
        [
            [a, ik, ik / alpha],
            [ik, -b, -ak / alpha],
            [-ik * (s + nu * k * k), b * (nu * k * k - alpha), (s + nu * k * k) * ak / alpha],
        ],
        dtype=complex,
    )


def leading_sigma(k: float, nu: float, alpha: float, s: complex, r: int, g0: complex, h: float = 1.0) -> Tuple[complex, complex, complex]:
    """Mode amplitudes answering a pressure-row forcing g0 h^r at leading order.

    r = 1 for the TN wall condition, r = 2 for WABE.
    """
    if not alpha > 0:
        raise ModalDomainError(f"leading-order amplitudes need alpha > 0, got {alpha}")
    s = complex(s)
    if not s.real > 0:
        raise ModalDomainError(f"leading-order amplitudes need Re(s) > 0, got {s}")
    g = g0 * h ** r
    a = np.sqrt((s + nu * k * k) / nu)
    b = np.sqrt((s + nu * k * k + alpha) / nu)
    ak = abs(k)
    den = (s + alpha) * (a * ak - k * k) * b
    sigma1 = 1j * g * k * (ak - b) / den
    sigma2 = -g / ((s + alpha) * b)
    sigma3 = alpha * g * (a * b - k * k) / den
    return complex(sigma1), complex(sigma2), complex(sigma3)


# grid-function modes and their difference equations

def eigen_mode(case: ModalCase, n: int, j_max: int = 8) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Grid values (U_j, V_j, P_j), j = 0..j_max, of the decaying mode behind column n of Z."""
    if n not in (0, 1, 2):
        raise ModalDomainError(f"mode index must be 0, 1 or 2, got {n}")
    h, k, nu, s = case.h, case.k, case.nu, complex(case.s)
    d2 = d2_roots(case)[n]
    lam = lambda_inside(d2)
    d1 = d1_of(lam)
    if n == 0:
        amp = np.array([-d1 / h, 1j * k, 0.0])
    else:
        amp = np.array([1j * k, d1 / h, -(s + nu * k * k) + nu * d2 / h ** 2])
        if n == 2:
            amp = amp / case.alpha
    powers = lam ** np.arange(j_max + 1)
    return amp[0] * powers, amp[1] * powers, amp[2] * powers


def interior_residual(case: ModalCase, U, V, P) -> np.ndarray:
    """Relative residuals of the x-momentum, y-momentum and damped pressure equations at j = 1..J-1."""
    h, k, nu, al, s = case.h, case.k, case.nu, case.alpha, complex(case.s)
    U, V, P = (np.asarray(x, dtype=complex) for x in (U, V, P))

    def dd(x):
        return (x[2:] - 2 * x[1:-1] + x[:-2]) / h ** 2

    def d0(x):
        return (x[2:] - x[:-2]) / (2 * h)

    u, v, p = U[1:-1], V[1:-1], P[1:-1]
    equations = [
        [s * u, 1j * k * p, nu * k * k * u, -nu * dd(U)],
        [s * v, d0(P), nu * k * k * v, -nu * dd(V)],
        [-k * k * p, dd(P), -al * 1j * k * u, -al * d0(V)],
    ]
    out = np.empty(3)
    for i, terms in enumerate(equations):
        total = np.abs(sum(terms)).max()
        scale = max(np.abs(t).max() for t in terms)
        out[i] = total / scale if scale > 0 else total
    return out


def boundary_rows(case: ModalCase, U, V, P) -> np.ndarray:
    """No-slip rows and the wall pressure row D+P_0 + i nu k D+U_0."""
    h, k, nu = case.h, case.k, case.nu
    return np.array([U[0], V[0], (P[1] - P[0]) / h + 1j * nu * k * (U[1] - U[0]) / h], dtype=complex)


def alpha_zero_mode(h: float, k: float, nu: float, s: complex, c_p: complex = 1.0, j_max: int = 8):
    """Undamped eigen-solution with pressure amplitude c_p."""
    s = complex(s)
    ex = math.exp(-solve_xi(h, k) * h)
    eg = exp_neg_gamma_h(h, k, nu, s)
    j = np.arange(j_max + 1)
    diff = ex ** j - eg ** j
    U = -1j * k * c_p / s * diff
    V = math.sinh(solve_xi(h, k) * h) / (h * s) * c_p * diff
    P = c_p * ex ** j + 0j
    return U, V, P


def alpha_zero_boundary_residual(h: float, k: float, nu: float, s: complex, c_p: complex = 1.0) -> np.ndarray:
    """Boundary rows of the undamped mode; equals (0, 0, c_p q(s) / h)."""
    case = ModalCase(h, k, nu, 0.0, s)
    return boundary_rows(case, *alpha_zero_mode(h, k, nu, s, c_p, j_max=2))


# scans and checks

@dataclass
class ComplexScan:
    re: np.ndarray
    im: np.ndarray
    values: np.ndarray  # (len(im), len(re))
    re_contours: List[np.ndarray] = field(default_factory=list)
    im_contours: List[np.ndarray] = field(default_factory=list)
    intersections: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def intersection_count(self, right_half: bool = True) -> int:
        if len(self.intersections) == 0:
            return 0
        sel = self.intersections[:, 0] > 0 if right_half else self.intersections[:, 0] <= 0
        return int(sel.sum())

    def rows(self):
        for j, y in enumerate(self.im):
            for i, x in enumerate(self.re):
                v = self.values[j, i]
                yield {"re_s": x, "im_s": y, "re_det": v.real, "im_det": v.imag}

    def contour_rows(self):
        curve = 0
        for part, lines in (("re", self.re_contours), ("im", self.im_contours)):
            for line in lines:
                for x, y in line:
                    yield {"curve_id": curve, "part": part, "re_s": x, "im_s": y}
                curve += 1


def detZ_scan(
    case: ModalCase,
    re_range: Tuple[float, float] = (-20.0, 20.0),
    im_range: Tuple[float, float] = (-30.0, 30.0),
    n_re: int = 400,
    n_im: int = 600,
    exclude_origin: bool = True,
    progress_cb: ProgressFn = _noop,
) -> ComplexScan:
    """det(Z) on a rectangular s grid with zero contours and candidate roots.

    A candidate is a cell where both the real and imaginary parts change sign;
    it is reported by the cell's lower-left corner.
    """
    re = np.linspace(re_range[0], re_range[1], n_re)
    im = np.linspace(im_range[0], im_range[1], n_im)
    S = re[None, :] + 1j * im[:, None]
    values = np.empty(S.shape, dtype=complex)
    for j in range(n_im):
        values[j] = det_Z_grid(case, S[j])
        progress_cb("detZ rows", j + 1, n_im)
    if exclude_origin:
        values[S == 0] = np.nan
    cells = sign_change_cells(values.real) & sign_change_cells(values.imag)
    jj, ii = np.nonzero(cells)
    return ComplexScan(
        re=re,
        im=im,
        values=values,
        re_contours=zero_contours(re, im, values.real),
        im_contours=zero_contours(re, im, values.imag),
        intersections=np.column_stack([re[ii], im[jj]]) if len(ii) else np.zeros((0, 2)),
    )


@dataclass
class QLemmaReport:
    checked: int = 0
    violations: List[Dict[str, float]] = field(default_factory=list)
    max_derivative_error: float = 0.0
    max_identity_error: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.violations


def verify_q_lemmas(
    h: float,
    nu: float,
    ks: Sequence[float],
    s_values: Sequence[float],
    fd_step: float = 1e-5,
    fd_rtol: float = 1e-6,
    identity_tol: float = 1e-9,
) -> QLemmaReport:
    """Check dq1/ds < 0, q1(s) < q1(0) and q(s) < q(0) < 0 on real s > 0.

    The closed-form derivative is compared with central differences and the
    identity N1^2 - N2^2 = 4 h^4 s^2 is checked along the way. The difference
    quotient is allowed its rounding error, about eps |q1| / step, on top of
    `fd_rtol`; the identity error is relative to max(N1^2, N2^2).
    """
    eps = np.finfo(float).eps
    report = QLemmaReport()
    for k in ks:
        base = ModalCase(h, k, nu, 0.0, 0.0)
        q1_0 = q1(base).real
        q_0 = q(base).real
        if not q_0 < 0:
            report.violations.append({"k": k, "s": 0.0, "check": "q(0) < 0", "value": q_0})
        for s in s_values:
            report.checked += 1
            case = base.at(s)
            d = q1_prime(h, k, nu, s)
            step = fd_step * max(1.0, s)
            q_plus = q1(case.at(s + step)).real
            q_minus = q1(case.at(s - step)).real
            fd = (q_plus - q_minus) / (2 * step)
            # q1 divides an O(1) difference by s
            rounding = 64 * eps * max(abs(q_plus), abs(q_minus), 1.0, 1.0 / s) / step
            err = abs(d - fd) / max(abs(d), 1e-300)
            report.max_derivative_error = max(report.max_derivative_error, err)
            n1, n2, _ = q1_prime_terms(h, k, nu, s)
            ident = abs(n1 * n1 - n2 * n2 - 4 * h ** 4 * s * s) / max(n1 * n1, n2 * n2, 4 * h ** 4 * s * s)
            report.max_identity_error = max(report.max_identity_error, ident)
            checks = [
                ("dq1/ds < 0", d, d < 0),
                ("q1(s) < q1(0)", q1(case).real, q1(case).real < q1_0),
                ("q(s) < q(0)", q(case).real, q(case).real < q_0),
                ("derivative matches differences", err, abs(d - fd) <= fd_rtol * abs(d) + rounding),
                ("N1^2 - N2^2 = 4 h^4 s^2", ident, ident <= identity_tol),
            ]
            for name, value, passed in checks:
                if not passed:
                    report.violations.append({"k": k, "s": s, "check": name, "value": value})
    return report


def q_scan(h: float, nu: float, ks: Sequence[float], s_values: Sequence[float]) -> List[Dict[str, float]]:
    """Rows (k, s, q1, q) on real s for plotting."""
    rows = []
    for k in ks:
        base = ModalCase(h, k, nu, 0.0, 0.0)
        for s in s_values:
            case = base.at(s)
            rows.append({"k": k, "s": s, "q1": q1(case).real, "q": q(case).real})
    return rows


def algebraic_invariants(n_draws: int = 200, seed: int = 0) -> Dict[str, float]:
    """Worst residuals of the root identities over random parameter draws."""
    rng = np.random.default_rng(seed)
    worst = {"reciprocal": 0.0, "d1_squared": 0.0, "quadratic": 0.0, "draws": 0}
    for _ in range(n_draws):
        case = ModalCase(
            h=float(rng.uniform(0.01, 0.2)),
            k=float(rng.integers(1, 21)),
            nu=float(rng.uniform(0.1, 2.0)),
            alpha=float(rng.uniform(1.0, 200.0)),
            s=complex(rng.uniform(0.01, 20.0), rng.uniform(-30.0, 30.0)),
        )
        try:
            roots = d2_roots(case)
        except DegenerateQuadraticError:
            continue
        worst["draws"] += 1
        for n, d2 in enumerate(roots):
            inner, outer = lambda_pair(d2)
            worst["reciprocal"] = max(worst["reciprocal"], abs(inner * outer - 1.0))
            d1 = d1_of(inner)
            worst["d1_squared"] = max(worst["d1_squared"], abs(d1 * d1 - d2 * (d2 + 4) / 4) / max(abs(d1 * d1), 1e-300))
            if n > 0:
                worst["quadratic"] = max(worst["quadratic"], quadratic_residual(case, d2))
    return worst
