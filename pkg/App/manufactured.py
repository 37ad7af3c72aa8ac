"""
Manufactured-solution convergence studies on the unit square.

Exact fields (k = f pi):
    u = a sin(kx x) sin(ky y) cos(kt t)
    v = a cos(kx x) cos(ky y) cos(kt t)
    p = a sin(kx x) cos(ky y) cos(kt t)
with forcing F = rho (u_t + u.grad u) + grad p - mu lap u.
"""

import math
import threading
from dataclasses import dataclass, field
from queue import Empty, Queue
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from assembly import FieldVector, assemble_mass, eval_divergence
from elements import FiniteElementSpace
from errors import InvalidArgumentError
from mesh import gen_unit_square
from splitstep import SolverConfig, SplitStepSolver

CONCURRENT_RUNS = 4
DEFAULT_T_FINAL = 0.1
QUANTITIES = ("u", "v", "p", "div")
NORMS = ("linf", "l2")

# case id -> (C_d, pressure boundary condition)
CASES = {"i": (0.0, "tn"), "ii": (1.0, "tn"), "iii": (0.0, "wabe"), "iv": (1.0, "wabe")}
BOUNDARY_MODES = ("noslip", "periodic")


def _noop(*_args, **_kwargs):
    pass


@dataclass(frozen=True)
class ManufacturedCase:
    case_id: str = "iv"
    amplitude: float = 0.5
    fx: float = 2.0
    fy: float = 2.0
    ft: float = 2.0
    rho: float = 1.0
    mu: float = 0.1

    def __post_init__(self):
        if self.case_id not in CASES:
            raise InvalidArgumentError(f"case must be one of {sorted(CASES)}, got {self.case_id!r}")
        if self.fx != self.fy:
            raise InvalidArgumentError("the exact velocity is solenoidal only when fx == fy")

    @property
    def cd(self) -> float:
        return CASES[self.case_id][0]

    @property
    def bc_mode(self) -> str:
        return CASES[self.case_id][1]

    @property
    def kx(self) -> float:
        return self.fx * math.pi

    @property
    def ky(self) -> float:
        return self.fy * math.pi

    @property
    def kt(self) -> float:
        return self.ft * math.pi


def _trig(case: ManufacturedCase, x, y, t):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return (
        np.sin(case.kx * x),
        np.cos(case.kx * x),
        np.sin(case.ky * y),
        np.cos(case.ky * y),
        math.cos(case.kt * t),
        math.sin(case.kt * t),
    )


def manufactured_fields(case: ManufacturedCase, x, y, t: float):
    sx, cx, sy, cy, ct, _ = _trig(case, x, y, t)
    a = case.amplitude
    return a * sx * sy * ct, a * cx * cy * ct, a * sx * cy * ct


def manufactured_velocity_dt(case: ManufacturedCase, x, y, t: float):
    sx, cx, sy, cy, _, st = _trig(case, x, y, t)
    a = case.amplitude
    return -a * case.kt * sx * sy * st, -a * case.kt * cx * cy * st


def eval_forcing(case: ManufacturedCase, x, y, t: float, rho: Optional[float] = None, mu: Optional[float] = None):
    """(F1, F2, div F) in closed form."""
    rho = case.rho if rho is None else rho
    mu = case.mu if mu is None else mu
    sx, cx, sy, cy, ct, st = _trig(case, x, y, t)
    a, kx, ky, kt = case.amplitude, case.kx, case.ky, case.kt
    u = a * sx * sy * ct
    v = a * cx * cy * ct
    u_t = -a * kt * sx * sy * st
    v_t = -a * kt * cx * cy * st
    u_x = a * kx * cx * sy * ct
    u_y = a * ky * sx * cy * ct
    v_x = -a * kx * sx * cy * ct
    v_y = -a * ky * cx * sy * ct
    p = a * sx * cy * ct
    p_x = a * kx * cx * cy * ct
    p_y = -a * ky * sx * sy * ct
    k2 = kx * kx + ky * ky
    f1 = rho * (u_t + u * u_x + v * u_y) + p_x + mu * k2 * u
    f2 = rho * (v_t + u * v_x + v * v_y) + p_y + mu * k2 * v
    div = rho * (u_x * u_x + 2.0 * u_y * v_x + v_y * v_y) - k2 * p
    return f1, f2, div


def solver_config(
    case: ManufacturedCase,
    order: int = 1,
    boundary: str = "noslip",
    dt_safety: float = 0.25,
    linear_solver: str = "direct",
    cd: Optional[float] = None,
    bc_mode: Optional[str] = None,
) -> SolverConfig:
    if boundary not in BOUNDARY_MODES:
        raise InvalidArgumentError(f"boundary must be one of {BOUNDARY_MODES}, got {boundary!r}")
    return SolverConfig(
        rho=case.rho,
        mu=case.mu,
        cd=case.cd if cd is None else cd,
        bc_mode=case.bc_mode if bc_mode is None else bc_mode,
        order=order,
        dt_safety=dt_safety,
        forcing=lambda x, y, t: eval_forcing(case, x, y, t)[:2],
        div_forcing=lambda x, y, t: eval_forcing(case, x, y, t)[2],
        boundary_velocity=lambda x, y, t: manufactured_fields(case, x, y, t)[:2],
        boundary_velocity_dt=lambda x, y, t: manufactured_velocity_dt(case, x, y, t),
        periodic_x=boundary == "periodic",
        linear_solver=linear_solver,
    )


def error_norms(values: np.ndarray, exact, space: FiniteElementSpace, t: float = 0.0) -> Tuple[float, float]:
    """(L_inf, L_2) of E = |v_h - I v_e| for a scalar field.

    `exact` is an array of dof values or a callable (x, y, t) -> values.
    """
    space = space.scalar()
    if callable(exact):
        x, y = space.dof_coords.T
        exact = np.broadcast_to(np.asarray(exact(x, y, t), dtype=float), x.shape)
    err = np.abs(np.asarray(values, dtype=float) - exact)
    qd = space.quadrature(2 * space.order + 1)
    eq = space.values_at(err, qd)
    return float(err.max(initial=0.0)), float(np.sqrt(np.sum(qd.jxw * eq * eq)))


def measure_errors(case: ManufacturedCase, state, space: FiniteElementSpace) -> Dict[str, float]:
    pspace = space.scalar()
    x, y = pspace.dof_coords.T
    ue, ve, pe = manufactured_fields(case, x, y, state.t)
    out = {}
    for name, vals, exact in (
        ("u", state.u_curr.component(0), ue),
        ("v", state.u_curr.component(1), ve),
        ("p", state.p_curr.values, pe),
    ):
        out[f"{name}_linf"], out[f"{name}_l2"] = error_norms(vals, exact, pspace)
    div = eval_divergence(state.u_curr)
    out["div_linf"], out["div_l2"] = div.linf, div.l2
    return out


def momentum_consistency(case: ManufacturedCase, m: int, order: int = 1, t: float = 0.05) -> float:
    """Largest interior nodal residual of the discrete momentum equation fed the exact fields.

    The weak residual R(u_e, p_e) - rho M du_e/dt is divided by the lumped
    mass so it reads as a pointwise value.
    """
    config = solver_config(case, order)
    solver = SplitStepSolver(gen_unit_square(m), config)
    vspace, pspace = solver.vspace, solver.pspace
    u = FieldVector.interpolate(vspace, lambda x, y: manufactured_fields(case, x, y, t)[:2])
    p = FieldVector.interpolate(pspace, lambda x, y: manufactured_fields(case, x, y, t)[2])
    u_t = vspace.interpolate(lambda x, y: manufactured_velocity_dt(case, x, y, t))
    residual = solver.momentum(u, p, t) - case.rho * (assemble_mass(vspace) @ u_t)
    lumped = np.tile(np.asarray(assemble_mass(pspace).sum(axis=1)).ravel(), 2)
    interior = np.ones(pspace.num_dofs, dtype=bool)
    interior[pspace.boundary_dofs] = False
    mask = np.tile(interior, 2)
    return float(np.max(np.abs(residual[mask] / lumped[mask])))


def run_manufactured(
    case: ManufacturedCase,
    m: int,
    order: int = 1,
    boundary: str = "noslip",
    t_final: float = DEFAULT_T_FINAL,
    dt_safety: float = 0.25,
    linear_solver: str = "direct",
    log_fn=_noop,
    cd: Optional[float] = None,
    bc_mode: Optional[str] = None,
) -> Dict[str, object]:
    """One mesh of a study: march the exact initial data to t_final and measure errors."""
    mesh = gen_unit_square(m)
    config = solver_config(case, order, boundary, dt_safety, linear_solver, cd, bc_mode)
    solver = SplitStepSolver(mesh, config)
    state = solver.initialize(lambda x, y: manufactured_fields(case, x, y, 0.0)[:2])
    result = solver.run(state, t_final, u_max_estimate=case.amplitude)
    row = {"m": m, "h": 1.0 / m, "dofs": solver.pspace.num_dofs, "steps": result.steps, "dt": result.dt}
    row.update(measure_errors(case, result.state, solver.vspace))
    log_fn(f"case {case.case_id} m={m}: p_l2={row['p_l2']:.3e} div_l2={row['div_l2']:.3e}", level="info")
    return row


def rate(e1: float, e2: float, h1: float, h2: float) -> float:
    return math.log(e1 / e2) / math.log(h1 / h2)


def convergence_rate(errors: Sequence[float], hs: Sequence[float]) -> float:
    """Least-squares slope of log(error) against log(h)."""
    e = np.asarray(errors, dtype=float)
    h = np.asarray(hs, dtype=float)
    keep = np.isfinite(e) & (e > 0)
    if keep.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(h[keep]), np.log(e[keep]), 1)[0])


@dataclass
class ConvergenceStudy:
    case: ManufacturedCase
    order: int
    boundary: str
    rows: List[Dict[str, object]] = field(default_factory=list)
    rates: Dict[str, float] = field(default_factory=dict)

    @property
    def failures(self) -> List[Dict[str, object]]:
        return [r for r in self.rows if "error" in r]

    def headers(self) -> List[str]:
        cols = ["m", "h", "dofs", "steps", "dt"] + [f"{q}_{n}" for q in QUANTITIES for n in NORMS]
        return cols + ["error"]

    def rate_rows(self):
        for key, value in self.rates.items():
            quantity, norm = key.rsplit("_", 1)
            yield {"case": self.case.case_id, "order": self.order, "boundary": self.boundary, "quantity": quantity, "norm": norm, "rate": value}


def convergence_study(
    case: ManufacturedCase,
    meshes: Sequence[int] = (10, 20, 40),
    order: int = 1,
    boundary: str = "noslip",
    t_final: float = DEFAULT_T_FINAL,
    dt_safety: float = 0.25,
    linear_solver: str = "direct",
    workers: int = CONCURRENT_RUNS,
    log_fn=_noop,
    progress_cb=_noop,
    cd: Optional[float] = None,
    bc_mode: Optional[str] = None,
) -> ConvergenceStudy:
    """Runs every mesh (concurrently) and fits convergence rates per quantity and norm.

    A run that fails is kept as a row with an "error" entry and left out of the fits.
    """
    if len(meshes) < 3:
        raise InvalidArgumentError(f"a convergence study needs at least 3 meshes, got {len(meshes)}")
    if boundary not in BOUNDARY_MODES:
        raise InvalidArgumentError(f"boundary must be one of {BOUNDARY_MODES}, got {boundary!r}")
    total = len(meshes)
    q = Queue()
    for m in meshes:
        q.put(m)
    results = []
    lock = threading.Lock()
    done_count = 0
    stage = f"Case {case.case_id}: P{order} {boundary} runs"
    progress_cb(stage, 0, total)

    def worker():
        nonlocal done_count
        while True:
            try:
                m = q.get_nowait()
            except Empty:
                return
            try:
                row = run_manufactured(case, m, order, boundary, t_final, dt_safety, linear_solver, log_fn, cd, bc_mode)
                with lock:
                    results.append(row)
                    done_count += 1
            except Exception as e:
                log_fn(f"case {case.case_id} m={m} failed: {e}", level="err")
                with lock:
                    results.append({"m": m, "h": 1.0 / m, "error": str(e)})
                    done_count += 1
            finally:
                q.task_done()
                progress_cb(stage, done_count, total)

    threads = [threading.Thread(target=worker, daemon=True) for _ in range(max(1, min(workers, total)))]
    for t in threads:
        t.start()
    q.join()

    study = ConvergenceStudy(case, order, boundary, sorted(results, key=lambda r: r["m"]))
    good = [r for r in study.rows if "error" not in r]
    hs = [r["h"] for r in good]
    for quantity in QUANTITIES:
        for norm in NORMS:
            key = f"{quantity}_{norm}"
            study.rates[key] = convergence_rate([r[key] for r in good], hs)
    return study
