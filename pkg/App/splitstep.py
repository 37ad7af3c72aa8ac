"""
Split-step time integrator for the velocity-pressure form of incompressible
Navier-Stokes:

    Stage I    AB2 predictor     rho (u^p - u^n)/dt = 3/2 R(u^n, p^n) - 1/2 R(u^{n-1}, p^{n-1})
    Stage II   pressure solve    p^p from u^p
    Stage III  AM2 corrector     rho (u^{n+1} - u^n)/dt = 1/2 R(u^n, p^n) + 1/2 R(u^p, p^p)
    Stage IV   pressure solve    p^{n+1} from u^{n+1}

R(u, p) is the weak momentum functional (L u + F, v) evaluated at its own time
level. Velocities are imposed strongly on the Dirichlet boundary; the pressure
equation carries either the TN boundary functional or the WABE rows and a
mean-zero constraint through a Lagrange multiplier.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from assembly import (
    FieldVector,
    ScalarField,
    VectorField,
    apply_momentum_rhs,
    assemble_load,
    assemble_mass,
    assemble_ppe_rhs,
    assemble_stiffness,
    assemble_tn_boundary,
    constrain,
    wabe_matrix,
    wabe_rhs,
)
from elements import SUPPORTED_ORDERS, FiniteElementSpace, build_dof_map, periodic_x_map
from errors import InstabilityError, InvalidArgumentError, SolverError
from linsolve import BorderedSystem, FactorizedSystem, bordered_matrix, solve_bordered, solve_spd
from mesh import BOTTOM, LEFT, RIGHT, TOP, Mesh

BC_MODES = ("tn", "wabe")
LINEAR_SOLVERS = ("direct", "iterative")
DT_EPS = 1e-12

LogFn = Callable[..., None]
ProgressFn = Callable[[str, int, int], None]


def _noop(*_args, **_kwargs):
    pass


@dataclass
class SolverConfig:
    """Physical and numerical parameters of one integrator run.

    `alpha` overrides C_d / h_min^2 when set (benchmarks quote alpha directly).
    Dirichlet tags default to every tagged boundary; with periodic_x they
    default to the bottom and top sides.
    """

    rho: float = 1.0
    mu: float = 0.01
    cd: float = 0.0
    bc_mode: str = "tn"
    order: int = 1
    dt_safety: float = 0.25
    forcing: Optional[VectorField] = None
    div_forcing: Optional[ScalarField] = None
    boundary_velocity: Optional[VectorField] = None
    boundary_velocity_dt: Optional[VectorField] = None
    dirichlet_tags: Optional[Tuple[int, ...]] = None
    periodic_x: bool = False
    convection: bool = True
    include_boundary_term: bool = False
    linear_solver: str = "direct"
    alpha: Optional[float] = None
    mass_tol: float = 1e-12
    pressure_tol: float = 1e-10

    def __post_init__(self):
        if not self.rho > 0:
            raise InvalidArgumentError(f"rho must be positive, got {self.rho}")
        if self.mu < 0:
            raise InvalidArgumentError(f"mu must be non-negative, got {self.mu}")
        if self.cd < 0:
            raise InvalidArgumentError(f"C_d must be non-negative, got {self.cd}")
        if self.alpha is not None and self.alpha < 0:
            raise InvalidArgumentError(f"alpha must be non-negative, got {self.alpha}")
        self.bc_mode = self.bc_mode.lower()
        if self.bc_mode not in BC_MODES:
            raise InvalidArgumentError(f"bc_mode must be one of {BC_MODES}, got {self.bc_mode!r}")
        if self.order not in SUPPORTED_ORDERS:
            raise InvalidArgumentError(f"element order must be one of {SUPPORTED_ORDERS}, got {self.order}")
        if self.linear_solver not in LINEAR_SOLVERS:
            raise InvalidArgumentError(f"linear_solver must be one of {LINEAR_SOLVERS}, got {self.linear_solver!r}")
        if not self.dt_safety > 0:
            raise InvalidArgumentError(f"dt_safety must be positive, got {self.dt_safety}")

    def damping(self, mesh: Mesh) -> float:
        if self.alpha is not None:
            return float(self.alpha)
        return self.cd / mesh.h_min ** 2


def select_dt(mesh: Mesh, config: SolverConfig, u_max_estimate: float) -> float:
    """safety * min(rho h^2 / (4 mu + alpha h^2 / 4), h / max(u_max, eps)).

    h is the smallest distance between neighbouring dofs (h_min / order).
    """
    h = mesh.h_min / config.order
    if not h > 0:
        raise InvalidArgumentError("mesh has a zero-length edge")
    alpha = config.damping(mesh)
    convective = h / max(abs(u_max_estimate), DT_EPS)
    denom = 4.0 * config.mu + alpha * h * h / 4.0
    diffusive = config.rho * h * h / denom if denom > 0 else math.inf
    return config.dt_safety * min(diffusive, convective)


@dataclass
class FlowState:
    u_prev: FieldVector
    u_curr: FieldVector
    p_prev: FieldVector
    p_curr: FieldVector
    t: float = 0.0
    step_index: int = 0
    # momentum functionals R at t_{n-1} and t_n; momentum_curr is filled lazily
    momentum_prev: Optional[np.ndarray] = field(default=None, repr=False)
    momentum_curr: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def space(self) -> FiniteElementSpace:
        return self.u_curr.space

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.u_curr.values)) and np.all(np.isfinite(self.p_curr.values)))


@dataclass
class FunctionalSeries:
    """Observer output: one row per recorded step."""

    names: List[str] = field(default_factory=list)
    times: List[float] = field(default_factory=list)
    steps: List[int] = field(default_factory=list)
    values: Dict[str, List[float]] = field(default_factory=dict)

    def record(self, step: int, t: float, row: Dict[str, float]) -> None:
        for name in row:
            if name not in self.values:
                self.names.append(name)
                self.values[name] = [math.nan] * len(self.times)
        self.times.append(float(t))
        self.steps.append(int(step))
        for name in self.names:
            self.values[name].append(float(row.get(name, math.nan)))

    def column(self, name: str) -> np.ndarray:
        return np.asarray(self.values[name])

    @property
    def headers(self) -> List[str]:
        return ["step", "t"] + self.names

    def rows(self):
        for i, t in enumerate(self.times):
            row = {"step": self.steps[i], "t": t}
            row.update({name: self.values[name][i] for name in self.names})
            yield row

    def __len__(self) -> int:
        return len(self.times)


@dataclass
class RunResult:
    state: FlowState
    series: FunctionalSeries
    dt: float
    steps: int


Observer = Callable[[FlowState], object]


class SplitStepSolver:
    """Owns the spaces, constant operators and factorizations for one mesh and config."""

    def __init__(self, mesh: Mesh, config: SolverConfig, log_fn: LogFn = _noop):
        self.mesh = mesh
        self.config = config
        self.log = log_fn
        self.vspace = build_dof_map(mesh, config.order, components=2)
        self.pspace = self.vspace.scalar()
        self.alpha = config.damping(mesh)

        if config.periodic_x:
            self.dirichlet_tags = config.dirichlet_tags or (BOTTOM, TOP)
            self.pressure_tags: Optional[Tuple[int, ...]] = tuple(t for t in mesh.tags if t not in (LEFT, RIGHT))
            self._P = periodic_x_map(self.pspace)
        else:
            self.dirichlet_tags = config.dirichlet_tags
            self.pressure_tags = None
            self._P = None

        self._mass = assemble_mass(self.pspace)
        self._load = assemble_load(self.pspace)
        self._build_velocity_system()
        self._pressure_ops: Dict[str, tuple] = {}
        self.log(
            f"Split-step solver: P{config.order}, {self.pspace.num_dofs} pressure dofs, "
            f"bc={config.bc_mode}, alpha={self.alpha:.6g}",
            level="info",
        )

    # periodic reduction helpers

    def _reduce(self, vec: np.ndarray) -> np.ndarray:
        return vec if self._P is None else self._P.T @ vec

    def _expand(self, vec: np.ndarray) -> np.ndarray:
        return vec if self._P is None else self._P @ vec

    def _reduce_matrix(self, A) -> sp.csr_matrix:
        return sp.csr_matrix(A) if self._P is None else sp.csr_matrix(self._P.T @ A @ self._P)

    def _reduced_index(self, dofs: np.ndarray) -> np.ndarray:
        if self._P is None:
            return dofs
        return self._P.indices[dofs]

    # velocity system

    def _build_velocity_system(self):
        full = self.pspace.boundary_dofs_for(self.dirichlet_tags)
        reduced, first = np.unique(self._reduced_index(full), return_index=True)
        self._dir_full = full[first]
        self._dir_reduced = reduced
        Mr = self._reduce_matrix(self._mass)
        self._mass_cols = Mr[:, reduced]
        self._mass_constrained, _ = constrain(Mr, np.zeros(Mr.shape[0]), reduced, np.zeros(len(reduced)), symmetric=True)
        self._mass_factor = FactorizedSystem(self._mass_constrained) if self.config.linear_solver == "direct" else None

    def boundary_values(self, t: float) -> np.ndarray:
        """(2, B) values of g at the constrained dofs."""
        g = self.config.boundary_velocity
        if g is None:
            return np.zeros((2, len(self._dir_full)))
        x, y = self.pspace.dof_coords[self._dir_full].T
        g1, g2 = g(x, y, t)
        return np.stack(np.broadcast_arrays(np.asarray(g1, dtype=float), np.asarray(g2, dtype=float)))

    def _solve_velocity(self, u_n: FieldVector, increment: np.ndarray, dt: float, t_new: float) -> FieldVector:
        """M u = M u^n + (dt / rho) increment, with u = g on the Dirichlet boundary."""
        n = self.pspace.num_dofs
        gb = self.boundary_values(t_new)
        out = np.empty(2 * n)
        for c in range(2):
            rhs = self._mass @ u_n.component(c) + (dt / self.config.rho) * increment[c * n:(c + 1) * n]
            rhs = self._reduce(rhs) - self._mass_cols @ gb[c]
            rhs[self._dir_reduced] = gb[c]
            if self._mass_factor is not None:
                x = self._mass_factor.solve(rhs)
            else:
                x = solve_spd(self._mass_constrained, rhs, tol=self.config.mass_tol).x
            x[self._dir_reduced] = gb[c]
            out[c * n:(c + 1) * n] = self._expand(x)
        return FieldVector(self.vspace, out)

    # pressure system

    def _wabe_layout(self):
        dofs, normals = self.pspace.boundary_dof_normals(self.pressure_tags)
        scale = 2.0 / self.pspace.support_h[dofs]
        return dofs, normals, scale

    def _pressure_operator(self, mode: str):
        if mode in self._pressure_ops:
            return self._pressure_ops[mode]
        n = self.pspace.num_dofs
        A = -assemble_stiffness(self.pspace)
        column = self._load.copy()
        layout = None
        if mode == "wabe":
            dofs, normals, scale = self._wabe_layout()
            W = sp.diags(scale) @ wabe_matrix(self.pspace, dofs, normals)
            keep = np.ones(n)
            keep[dofs] = 0.0
            embed = sp.csr_matrix((np.ones(len(dofs)), (dofs, np.arange(len(dofs)))), shape=(n, len(dofs)))
            A = sp.diags(keep) @ A + embed @ W
            column *= keep
            layout = (dofs, normals, scale)
        A_r = self._reduce_matrix(A)
        border_r = self._reduce(self._load)
        column_r = self._reduce(column)
        factor = None
        if self.config.linear_solver == "direct":
            factor = FactorizedSystem(bordered_matrix(A_r, border_r, column_r))
        self._pressure_ops[mode] = (A_r, border_r, column_r, factor, layout)
        return self._pressure_ops[mode]

    def solve_pressure(self, u_new: FieldVector, u_old: FieldVector, dt: float, t: float, mode: Optional[str] = None) -> FieldVector:
        """Mean-zero pressure from the velocity u_new at time t.

        WABE rows use (u_new - u_old) / dt for the velocity time derivative.
        """
        cfg = self.config
        mode = mode or cfg.bc_mode
        A_r, border_r, column_r, factor, layout = self._pressure_operator(mode)
        f = assemble_ppe_rhs(u_new, cfg.div_forcing, self.alpha, t, cfg.rho, convection=cfg.convection)
        if mode == "tn":
            f -= assemble_tn_boundary(
                u_new,
                cfg.boundary_velocity,
                cfg.boundary_velocity_dt,
                cfg.forcing,
                t,
                cfg.rho,
                cfg.mu,
                tags=self.pressure_tags,
                convection=cfg.convection,
            )
        else:
            dofs, normals, scale = layout
            f[dofs] = scale * wabe_rhs(
                u_new, u_old, dt, dofs, normals, cfg.forcing, t, cfg.rho, cfg.mu, cfg.include_boundary_term, cfg.convection
            )
        rhs = self._reduce(f)
        if factor is not None:
            p = factor.solve(np.append(rhs, 0.0))[:-1]
        else:
            system = BorderedSystem(A_r, border_r, rhs, column=column_r)
            method = "minres" if mode == "tn" else "gmres"
            p = solve_bordered(system, tol=cfg.pressure_tol, method=method).x
        return FieldVector(self.pspace, self._expand(p))

    def momentum(self, u: FieldVector, p: FieldVector, t: float) -> np.ndarray:
        cfg = self.config
        return apply_momentum_rhs(u, p, cfg.forcing, t, cfg.rho, cfg.mu, convection=cfg.convection)

    def pressure_mean(self, p) -> float:
        """(p, 1) of a pressure FieldVector, or of the current pressure of a FlowState."""
        if isinstance(p, FlowState):
            p = p.p_curr
        return float(self._load @ p.values)

    # integrator

    def initialize(self, f: Optional[Callable] = None, t0: float = 0.0) -> FlowState:
        """Interpolate the initial velocity f(x, y) -> (u, v), impose g(., t0) and solve for p.

        The history is seeded with the current level, so the first step is a
        forward-Euler predictor followed by the trapezoidal corrector. The
        initial pressure always uses the TN functional since no du/dt exists yet.
        """
        if f is None:
            u0 = FieldVector.zeros(self.vspace)
        else:
            u0 = FieldVector.interpolate(self.vspace, f)
        n = self.pspace.num_dofs
        gb = self.boundary_values(t0)
        u0.values[self._dir_full] = gb[0]
        u0.values[self._dir_full + n] = gb[1]
        try:
            p0 = self.solve_pressure(u0, u0, 1.0, t0, mode="tn")
        except SolverError as e:
            raise e.with_stage("initial pressure")
        r0 = self.momentum(u0, p0, t0)
        return FlowState(u0.copy(), u0, p0.copy(), p0, t0, 0, momentum_prev=r0, momentum_curr=r0)

    def step(self, state: FlowState, dt: float) -> FlowState:
        if not dt > 0:
            raise InvalidArgumentError(f"time step must be positive, got {dt}")
        t_new = state.t + dt
        stage = "Stage I predictor"
        try:
            r_n = state.momentum_curr if state.momentum_curr is not None else self.momentum(state.u_curr, state.p_curr, state.t)
            r_prev = state.momentum_prev if state.momentum_prev is not None else r_n
            u_p = self._solve_velocity(state.u_curr, 1.5 * r_n - 0.5 * r_prev, dt, t_new)
            stage = "Stage II pressure"
            p_p = self.solve_pressure(u_p, state.u_curr, dt, t_new)
            stage = "Stage III corrector"
            r_p = self.momentum(u_p, p_p, t_new)
            u_new = self._solve_velocity(state.u_curr, 0.5 * (r_n + r_p), dt, t_new)
            stage = "Stage IV pressure"
            p_new = self.solve_pressure(u_new, state.u_curr, dt, t_new)
        except SolverError as e:
            raise e.with_stage(stage)
        new = FlowState(
            u_prev=state.u_curr,
            u_curr=u_new,
            p_prev=state.p_curr,
            p_curr=p_new,
            t=t_new,
            step_index=state.step_index + 1,
            momentum_prev=r_n,
        )
        if not new.is_finite():
            raise InstabilityError(new.step_index, t_new)
        return new

    def run(
        self,
        state: FlowState,
        t_final: float,
        dt: Optional[float] = None,
        observers: Optional[Dict[str, Observer]] = None,
        stride: int = 1,
        u_max_estimate: Optional[float] = None,
        progress_cb: ProgressFn = _noop,
    ) -> RunResult:
        """Fixed-step march to t_final; observers are sampled every `stride` steps and at the end.

        An observer returns a number, recorded under its own name, or a dict
        whose keys become columns. The step is
        shrunk to dt_eff = (t_final - t) / ceil((t_final - t) / dt) so the run
        ends exactly at t_final.
        """
        if t_final < state.t:
            raise InvalidArgumentError(f"t_final={t_final} lies before the state time {state.t}")
        if stride < 1:
            raise InvalidArgumentError(f"stride must be at least 1, got {stride}")
        observers = observers or {}
        series = FunctionalSeries()
        span = t_final - state.t
        if dt is None:
            if u_max_estimate is None:
                u_max_estimate = max(
                    float(np.max(np.abs(state.u_curr.values), initial=0.0)),
                    float(np.max(np.abs(self.boundary_values(state.t)), initial=0.0)),
                ) or 1.0
            dt = select_dt(self.mesh, self.config, u_max_estimate)
        steps = int(math.ceil(span / dt - 1e-9)) if span > 0 else 0
        dt_eff = span / steps if steps else dt
        self.log(f"Running {steps} steps of dt={dt_eff:.6g} to t={t_final:.6g}", level="info")

        def sample(s: FlowState):
            row = {}
            for name, obs in observers.items():
                value = obs(s)
                if isinstance(value, dict):
                    row.update(value)
                else:
                    row[name] = value
            series.record(s.step_index, s.t, row)

        sample(state)
        for k in range(1, steps + 1):
            state = self.step(state, dt_eff)
            if k == steps:
                # land exactly on t_final
                state = replace(state, t=float(t_final))
            if k % stride == 0 or k == steps:
                sample(state)
            progress_cb("steps", k, steps)
        return RunResult(state, series, dt_eff, steps)


def initialize(mesh: Mesh, config: SolverConfig, f: Optional[Callable] = None) -> Tuple[SplitStepSolver, FlowState]:
    solver = SplitStepSolver(mesh, config)
    return solver, solver.initialize(f)


def boundary_mismatch(solver: SplitStepSolver, state: FlowState) -> float:
    """max |u_h - g| over the constrained velocity dofs."""
    gb = solver.boundary_values(state.t)
    n = solver.pspace.num_dofs
    u = state.u_curr.values
    return float(max(np.max(np.abs(u[solver._dir_full] - gb[0]), initial=0.0), np.max(np.abs(u[solver._dir_full + n] - gb[1]), initial=0.0)))
