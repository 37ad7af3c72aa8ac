"""
Benchmark flows: the smoothed lid-driven cavity and the channel flow past a cylinder.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from assembly import FieldVector, assemble_stiffness, assemble_vorticity_load, constrain, eval_divergence, nodal_average
from contours import zero_contours
from errors import InvalidArgumentError
from linsolve import FactorizedSystem, solve_spd
from mesh import (
    CHANNEL_HEIGHT,
    CHANNEL_LENGTH,
    CYLINDER,
    CYLINDER_CENTER,
    CYLINDER_MESH_PATH,
    CYLINDER_RADIUS,
    gen_stretched_square,
    load_mesh,
    refine_uniform,
    stretch_for_ratio,
)
from splitstep import FlowState, FunctionalSeries, SolverConfig, SplitStepSolver, select_dt

BOUNDARY_TOL = 1e-9

# Ghia, Ghia & Shin (1982), Re = 1000 centerline data
GHIA_U = np.array([
    (1.0000, 1.00000), (0.9766, 0.65928), (0.9688, 0.57492), (0.9609, 0.51117),
    (0.9531, 0.46604), (0.8516, 0.33304), (0.7344, 0.18719), (0.6172, 0.05702),
    (0.5000, -0.06080), (0.4531, -0.10648), (0.2813, -0.27805), (0.1719, -0.38289),
    (0.1016, -0.29730), (0.0703, -0.22220), (0.0625, -0.20196), (0.0547, -0.18109),
    (0.0000, 0.00000),
])  # (y, u(0.5, y))
GHIA_V = np.array([
    (1.0000, 0.00000), (0.9688, -0.21388), (0.9609, -0.27669), (0.9531, -0.33714),
    (0.9453, -0.39188), (0.9063, -0.51550), (0.8594, -0.42665), (0.8047, -0.31966),
    (0.5000, 0.02526), (0.2344, 0.32235), (0.2266, 0.33075), (0.1563, 0.37095),
    (0.0938, 0.32627), (0.0781, 0.30353), (0.0703, 0.29012), (0.0625, 0.27485),
    (0.0000, 0.00000),
])  # (x, v(x, 0.5))

VORTICITY_LEVELS = (-5.0, -4.0, -3.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 3.0)
PRESSURE_LEVELS = (0.3, 0.17, 0.12, 0.11, 0.09, 0.07, 0.05, 0.02, 0.0, -0.002)
# stream-function levels of the Re = 1000 reference solution
STREAM_LEVELS = (
    -0.1175, -0.115, -0.11, -0.1, -0.09, -0.07, -0.05, -0.03, -0.01, -1e-4, -1e-5, -1e-7, -1e-10,
    1e-8, 1e-7, 1e-6, 1e-5, 5e-5, 1e-4, 2.5e-4, 5e-4, 1e-3, 1.5e-3, 3e-3,
)

# drag/lift normalisation of the channel benchmark
MEAN_VELOCITY = 1.0
CYLINDER_DIAMETER = 2 * CYLINDER_RADIUS
CYLINDER_ALPHA = 5521.08
FRONT_POINT = (CYLINDER_CENTER[0] - CYLINDER_RADIUS, CYLINDER_CENTER[1])
BACK_POINT = (CYLINDER_CENTER[0] + CYLINDER_RADIUS, CYLINDER_CENTER[1])


def _noop(*_args, **_kwargs):
    pass


# Lid-driven cavity

def cavity_boundary_u0(x):
    """Lid speed, smoothed to zero over a few cells at both ends."""
    return 0.5 * (1.0 - np.tanh((np.abs(np.asarray(x, dtype=float) - 0.5) - 0.495) / 0.01))


def cavity_lid(x, y, t):
    on_lid = np.abs(np.asarray(y, dtype=float) - 1.0) < BOUNDARY_TOL
    return np.where(on_lid, cavity_boundary_u0(x), 0.0), np.zeros_like(np.asarray(x, dtype=float))


def _steady(x, y, t):
    return np.zeros_like(np.asarray(x, dtype=float)), np.zeros_like(np.asarray(x, dtype=float))


@dataclass
class CavityConfig:
    m: int = 64
    spacing_ratio: float = 2.389
    nu: float = 1e-3
    rho: float = 1.0
    t_final: float = 50.0
    cd: float = 1.0
    bc_mode: str = "wabe"
    order: int = 1
    dt_safety: float = 0.25
    sample_interval: float = 1.0
    profile_points: int = 129
    linear_solver: str = "direct"

    def __post_init__(self):
        if self.m < 2:
            raise InvalidArgumentError(f"cavity mesh needs m >= 2, got {self.m}")
        if not self.t_final > 0:
            raise InvalidArgumentError(f"t_final must be positive, got {self.t_final}")
        if not self.sample_interval > 0:
            raise InvalidArgumentError(f"sample_interval must be positive, got {self.sample_interval}")

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            rho=self.rho,
            mu=self.nu * self.rho,
            cd=self.cd,
            bc_mode=self.bc_mode,
            order=self.order,
            dt_safety=self.dt_safety,
            boundary_velocity=cavity_lid,
            boundary_velocity_dt=_steady,
            linear_solver=self.linear_solver,
        )


@dataclass
class CenterlineProfile:
    t: float
    y: np.ndarray
    u: np.ndarray  # u(0.5, y)
    x: np.ndarray
    v: np.ndarray  # v(x, 0.5)

    def rows(self):
        for i in range(len(self.y)):
            yield {"t": self.t, "y": self.y[i], "u_center": self.u[i], "x": self.x[i], "v_center": self.v[i]}


@dataclass
class CavityResult:
    config: CavityConfig
    solver: SplitStepSolver
    state: FlowState
    series: FunctionalSeries
    profiles: List[CenterlineProfile] = field(default_factory=list)

    @property
    def final_profile(self) -> CenterlineProfile:
        return self.profiles[-1]


def centerline_profile(solver: SplitStepSolver, state: FlowState, n: int = 129) -> CenterlineProfile:
    s = np.linspace(0.0, 1.0, n)
    mid = np.full(n, 0.5)
    u = solver.vspace.evaluate(state.u_curr.values, np.column_stack([mid, s]))[:, 0]
    v = solver.vspace.evaluate(state.u_curr.values, np.column_stack([s, mid]))[:, 1]
    return CenterlineProfile(state.t, s, u, s.copy(), v)


def cavity_mesh(config: CavityConfig):
    return gen_stretched_square(config.m, stretch_for_ratio(config.spacing_ratio))


def run_cavity(config: CavityConfig, log_fn=_noop, progress_cb=_noop) -> CavityResult:
    """March the cavity from rest to t_final, sampling centerline profiles every sample_interval."""
    mesh = cavity_mesh(config)
    solver = SplitStepSolver(mesh, config.solver_config(), log_fn=log_fn)
    state = solver.initialize()
    profiles: List[CenterlineProfile] = []
    dt_target = select_dt(mesh, solver.config, 1.0)
    stride = max(1, int(math.floor(config.sample_interval / dt_target + 1e-9)))

    def observe(s: FlowState):
        profile = centerline_profile(solver, s, config.profile_points)
        profiles.append(profile)
        div = eval_divergence(s.u_curr)
        k = int(np.argmin(profile.u))
        return {"u_min": float(profile.u[k]), "y_at_u_min": float(profile.y[k]), "div_l2": div.l2, "div_linf": div.linf}

    log_fn(f"Cavity: m={config.m}, nu={config.nu:g}, bc={config.bc_mode}, alpha={solver.alpha:.6g}", level="info")
    result = solver.run(state, config.t_final, dt=dt_target, observers={"cavity": observe}, stride=stride, progress_cb=progress_cb)
    log_fn(f"Cavity finished at t={result.state.t:g} after {result.steps} steps", level="success")
    return CavityResult(config, solver, result.state, result.series, profiles)


def _interior_minima(values: np.ndarray) -> int:
    inner = values[1:-1]
    return int(np.sum((inner < values[:-2]) & (inner < values[2:])))


def compare_centerlines(profile: CenterlineProfile) -> Dict[str, float]:
    """Largest deviation from the reference data, interpolating the computed profiles."""
    u_ref = np.interp(GHIA_U[:, 0], profile.y, profile.u)
    v_ref = np.interp(GHIA_V[:, 0], profile.x, profile.v)
    return {
        "u_max_deviation": float(np.max(np.abs(u_ref - GHIA_U[:, 1]))),
        "v_max_deviation": float(np.max(np.abs(v_ref - GHIA_V[:, 1]))),
    }


def cavity_checks(result: CavityResult, window: float = 10.0) -> Dict[str, float]:
    """Minimum of u(0.5, y), its location, the number of interior minima and the
    relative profile change over the final `window` time units."""
    final = result.final_profile
    k = int(np.argmin(final.u))
    earlier = [p for p in result.profiles if p.t <= final.t - window + 1e-9]
    change = math.nan
    if earlier:
        ref = earlier[-1]
        scale = max(np.max(np.abs(final.u)), np.max(np.abs(final.v)), 1e-300)
        change = float(max(np.max(np.abs(final.u - ref.u)), np.max(np.abs(final.v - ref.v))) / scale)
    checks = {
        "u_min": float(final.u[k]),
        "y_at_u_min": float(final.y[k]),
        "interior_minima": _interior_minima(final.u),
        "profile_change": change,
    }
    checks.update(compare_centerlines(final))
    return checks


def field_contours(space, values: np.ndarray, levels: Sequence[float], n: int = 201, bounds=(0.0, 1.0, 0.0, 1.0)):
    """Level curves of a scalar FE field sampled on an n x n grid; yields rows (level, curve_id, x, y)."""
    x0, x1, y0, y1 = bounds
    xs = np.linspace(x0, x1, n)
    ys = np.linspace(y0, y1, n)
    X, Y = np.meshgrid(xs, ys)
    grid = space.scalar().evaluate(values, np.column_stack([X.ravel(), Y.ravel()])).reshape(n, n)
    curve = 0
    for level in levels:
        for line in zero_contours(xs, ys, grid - level):
            for x, y in line:
                yield {"level": level, "curve_id": curve, "x": x, "y": y}
            curve += 1


def stream_function(u: FieldVector, linear_solver: str = "direct") -> np.ndarray:
    """psi with u = psi_y, v = -psi_x in a closed box: -lap psi = v_x - u_y, psi = 0 on the walls."""
    space = u.space.scalar()
    walls = space.boundary_dofs
    A, rhs = constrain(assemble_stiffness(space), assemble_vorticity_load(u), walls, np.zeros(len(walls)), symmetric=True)
    if linear_solver == "direct":
        return FactorizedSystem(A).solve(rhs)
    return solve_spd(A, rhs).x


def cavity_contour_rows(result: CavityResult, n: int = 201, psi: Optional[np.ndarray] = None):
    """Streamlines, vorticity and pressure level curves of the final state."""
    if psi is None:
        psi = stream_function(result.state.u_curr, result.config.linear_solver)
    for row in field_contours(result.solver.pspace, psi, STREAM_LEVELS, n):
        yield dict(row, field="streamfunction")
    vort = nodal_average(result.state.u_curr, "curl")
    for row in field_contours(result.solver.pspace, vort, VORTICITY_LEVELS, n):
        yield dict(row, field="vorticity")
    for row in field_contours(result.solver.pspace, result.state.p_curr.values, PRESSURE_LEVELS, n):
        yield dict(row, field="pressure")


# Flow past a cylinder

def cylinder_inflow(y, t):
    """Parabolic inflow with peak 1.5 sin(pi t / 8)."""
    y = np.asarray(y, dtype=float)
    H = CHANNEL_HEIGHT
    return 6.0 * y * (H - y) / H ** 2 * math.sin(math.pi * t / 8.0), np.zeros_like(y)


def _inflow_rate(y, t):
    y = np.asarray(y, dtype=float)
    H = CHANNEL_HEIGHT
    return 6.0 * y * (H - y) / H ** 2 * (math.pi / 8.0) * math.cos(math.pi * t / 8.0), np.zeros_like(y)


def _on_ends(x):
    x = np.asarray(x, dtype=float)
    return (np.abs(x) < BOUNDARY_TOL) | (np.abs(x - CHANNEL_LENGTH) < BOUNDARY_TOL)


def cylinder_boundary(x, y, t):
    """Parabolic profile on inflow and outflow, no slip on the walls and the cylinder."""
    u, v = cylinder_inflow(y, t)
    return np.where(_on_ends(x), u, 0.0), v


def cylinder_boundary_rate(x, y, t):
    u, v = _inflow_rate(y, t)
    return np.where(_on_ends(x), u, 0.0), v


@dataclass
class CylinderConfig:
    mesh_path: str = CYLINDER_MESH_PATH
    refine: int = 4
    nu: float = 1e-3
    rho: float = 1.0
    t_final: float = 8.0
    alpha: Optional[float] = CYLINDER_ALPHA
    cd: Optional[float] = None
    bc_mode: str = "wabe"
    order: int = 1
    dt_safety: float = 0.25
    stride: int = 10
    linear_solver: str = "direct"

    def __post_init__(self):
        if self.refine < 1:
            raise InvalidArgumentError(f"refine must be >= 1, got {self.refine}")
        if not self.t_final > 0:
            raise InvalidArgumentError(f"t_final must be positive, got {self.t_final}")

    def solver_config(self) -> SolverConfig:
        # an explicit damping constant takes precedence over the quoted alpha
        return SolverConfig(
            rho=self.rho,
            mu=self.nu * self.rho,
            cd=self.cd or 0.0,
            alpha=None if self.cd is not None else self.alpha,
            bc_mode=self.bc_mode,
            order=self.order,
            dt_safety=self.dt_safety,
            boundary_velocity=cylinder_boundary,
            boundary_velocity_dt=cylinder_boundary_rate,
            linear_solver=self.linear_solver,
        )


def cylinder_mesh(config: CylinderConfig):
    return refine_uniform(load_mesh(config.mesh_path), config.refine)


def drag_lift_dp(
    state: FlowState,
    mu: float,
    rho: float = 1.0,
    mean_velocity: float = MEAN_VELOCITY,
    diameter: float = CYLINDER_DIAMETER,
) -> Tuple[float, float, float]:
    """(C_d, C_l, delta p) from the boundary stress integral over the cylinder edges.

    The force on the body is -integral of (-p I + mu (grad u + grad u^T)) n ds
    with n the outward normal of the fluid domain.
    """
    vspace = state.u_curr.space
    pspace = state.p_curr.space
    bq = vspace.boundary_quadrature((CYLINDER,))
    if len(bq.cells) == 0:
        raise InvalidArgumentError("mesh has no cylinder boundary")
    dofs = vspace.cell_dofs[bq.cells]
    pq = np.einsum("bn,bqn->bq", state.p_curr.values[dofs], bq.basis)
    comps = vspace.split(state.u_curr.values)[:, dofs]  # (2, B, N)
    gu = np.einsum("cbn,bqnj->bqcj", comps, bq.grads)
    strain = gu + np.swapaxes(gu, -1, -2)
    stress = mu * strain - pq[..., None, None] * np.eye(2)
    traction = np.einsum("bqij,bj->bqi", stress, bq.normals)
    force = -np.einsum("bq,bqi->i", bq.jxw, traction)
    scale = 2.0 / (rho * mean_velocity ** 2 * diameter)
    dp = pspace.evaluate(state.p_curr.values, np.array([FRONT_POINT, BACK_POINT]))
    return float(scale * force[0]), float(scale * force[1]), float(dp[0] - dp[1])


@dataclass
class CylinderResult:
    config: CylinderConfig
    solver: SplitStepSolver
    state: FlowState
    series: FunctionalSeries
    summary: Dict[str, float]


def summarize_cylinder(series: FunctionalSeries, solver: SplitStepSolver) -> Dict[str, float]:
    drag = series.column("drag")
    lift = series.column("lift")
    t = np.asarray(series.times)
    i, j = int(np.nanargmax(drag)), int(np.nanargmax(lift))
    return {
        "drag_max": float(drag[i]),
        "t_drag_max": float(t[i]),
        "lift_max": float(lift[j]),
        "t_lift_max": float(t[j]),
        "dp_final": float(series.column("dp")[-1]),
        "alpha": solver.alpha,
        "damping_constant": solver.alpha * solver.mesh.h_min ** 2,
        "h_min": solver.mesh.h_min,
        "dofs": solver.pspace.num_dofs,
    }


def run_cylinder(config: CylinderConfig, log_fn=_noop, progress_cb=_noop) -> CylinderResult:
    mesh = cylinder_mesh(config)
    solver = SplitStepSolver(mesh, config.solver_config(), log_fn=log_fn)
    state = solver.initialize()
    mu = config.nu * config.rho

    def forces(s: FlowState):
        cd, cl, dp = drag_lift_dp(s, mu, config.rho)
        return {"drag": cd, "lift": cl, "dp": dp}

    log_fn(
        f"Cylinder: {solver.pspace.num_dofs} dofs, h_min={mesh.h_min:.5g}, alpha={solver.alpha:.6g} "
        f"(C_d={solver.alpha * mesh.h_min ** 2:.4g})",
        level="info",
    )
    result = solver.run(state, config.t_final, observers={"forces": forces}, stride=config.stride, u_max_estimate=1.5, progress_cb=progress_cb)
    summary = summarize_cylinder(result.series, solver)
    log_fn(
        f"Cylinder done: C_d,max={summary['drag_max']:.4f} at t={summary['t_drag_max']:.3f}, "
        f"C_l,max={summary['lift_max']:.4f} at t={summary['t_lift_max']:.3f}, dp(T)={summary['dp_final']:.4f}",
        level="success",
    )
    return CylinderResult(config, solver, result.state, result.series, summary)

