import math
from dataclasses import replace

import numpy as np
import pytest

from assembly import FieldVector
from errors import InvalidArgumentError
from mesh import LEFT, RIGHT
from splitstep import FunctionalSeries, SolverConfig, SplitStepSolver, boundary_mismatch, initialize, select_dt


def uniform_flow(x, y, t):
    return np.ones_like(x), np.zeros_like(x)


def shear_flow(x, y, t):
    return y, np.zeros_like(x)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"rho": 0.0},
        {"mu": -1.0},
        {"cd": -0.5},
        {"alpha": -1.0},
        {"bc_mode": "neumann"},
        {"order": 3},
        {"linear_solver": "cholesky"},
        {"dt_safety": 0.0},
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(InvalidArgumentError):
        SolverConfig(**kwargs)


def test_config_damping(square4):
    assert SolverConfig(bc_mode="WABE").bc_mode == "wabe"
    assert SolverConfig(cd=1.0).damping(square4) == pytest.approx(16.0)
    assert SolverConfig(cd=1.0, alpha=3.5).damping(square4) == 3.5


def test_select_dt(square4):
    cfg = SolverConfig(mu=0.01, cd=0.0, dt_safety=1.0)
    h = 0.25
    assert select_dt(square4, cfg, 1.0) == pytest.approx(min(h * h / 0.04, h))
    assert select_dt(square4, cfg, 100.0) == pytest.approx(h / 100.0)
    p2 = SolverConfig(mu=0.5, cd=2.0, order=2, dt_safety=0.5)
    h2 = h / 2
    alpha = 2.0 / h ** 2
    expected = 0.5 * min(h2 * h2 / (4 * 0.5 + alpha * h2 * h2 / 4), h2 / 1.0)
    assert select_dt(square4, p2, 1.0) == pytest.approx(expected)
    inviscid = SolverConfig(mu=0.0, dt_safety=1.0)
    assert select_dt(square4, inviscid, 0.0) == pytest.approx(h / 1e-12)


@pytest.mark.parametrize("bc_mode", ["tn", "wabe"])
def test_zero_data_stays_zero(square4, bc_mode):
    solver, state = initialize(square4, SolverConfig(mu=0.1, cd=1.0, order=2, bc_mode=bc_mode))
    result = solver.run(state, 0.05, dt=0.01)
    assert result.steps == 5
    np.testing.assert_allclose(result.state.u_curr.values, 0.0, atol=1e-12)
    np.testing.assert_allclose(result.state.p_curr.values, 0.0, atol=1e-12)


@pytest.mark.parametrize("bc_mode", ["tn", "wabe"])
def test_uniform_flow_is_steady(square4, bc_mode):
    cfg = SolverConfig(mu=0.05, cd=1.0, bc_mode=bc_mode, boundary_velocity=uniform_flow)
    solver, state = initialize(square4, cfg, lambda x, y: uniform_flow(x, y, 0.0))
    for _ in range(3):
        state = solver.step(state, 0.02)
    u, v = state.u_curr.component(0), state.u_curr.component(1)
    np.testing.assert_allclose(u, 1.0, atol=1e-11)
    np.testing.assert_allclose(v, 0.0, atol=1e-11)
    np.testing.assert_allclose(state.p_curr.values, 0.0, atol=1e-10)


def test_periodic_uniform_flow(square4):
    cfg = SolverConfig(mu=0.05, periodic_x=True, boundary_velocity=uniform_flow)
    solver, state = initialize(square4, cfg, lambda x, y: uniform_flow(x, y, 0.0))
    state = solver.run(state, 0.04, dt=0.02).state
    np.testing.assert_allclose(state.u_curr.component(0), 1.0, atol=1e-11)
    x = solver.pspace.dof_coords[:, 0]
    assert solver.dirichlet_tags == (1, 3)
    assert LEFT not in solver.pressure_tags and RIGHT not in solver.pressure_tags
    # right-side dofs are slaved to their left partners
    right, left = np.isclose(x, 1.0), np.isclose(x, 0.0)
    p = state.p_curr.values
    np.testing.assert_allclose(p[right], p[left], atol=1e-12)


def test_run_lands_on_final_time(square4):
    solver, state = initialize(square4, SolverConfig(mu=0.1, boundary_velocity=shear_flow))
    ticks = []
    result = solver.run(
        state,
        0.1,
        dt=0.03,
        observers={"mean_p": solver.pressure_mean, "mismatch": lambda s: {"g_err": boundary_mismatch(solver, s)}},
        stride=3,
        progress_cb=lambda stage, done, total: ticks.append(done),
    )
    assert result.steps == 4
    assert result.dt == pytest.approx(0.025)
    assert result.state.t == 0.1
    assert result.state.step_index == 4
    assert ticks == [1, 2, 3, 4]
    assert result.series.steps == [0, 3, 4]
    assert result.series.headers == ["step", "t", "mean_p", "g_err"]
    np.testing.assert_allclose(result.series.column("mean_p"), 0.0, atol=1e-12)
    np.testing.assert_allclose(result.series.column("g_err"), 0.0, atol=1e-12)


def test_pressure_mean_takes_a_field_or_a_state(square4):
    solver, state = initialize(square4, SolverConfig())
    assert solver.pressure_mean(state) == solver.pressure_mean(state.p_curr)
    constant = FieldVector(solver.pspace, np.full(solver.pspace.num_dofs, 3.0))
    assert solver.pressure_mean(constant) == pytest.approx(3.0, rel=1e-12)
    assert solver.pressure_mean(replace(state, p_curr=constant)) == pytest.approx(3.0, rel=1e-12)


def test_run_with_automatic_step(square4):
    cfg = SolverConfig(mu=0.1, boundary_velocity=shear_flow)
    solver, state = initialize(square4, cfg)
    dt = select_dt(square4, cfg, 1.0)
    result = solver.run(state, 2 * dt)
    assert result.steps == 2
    assert result.state.t == pytest.approx(2 * dt)


def test_run_argument_errors(square4):
    solver, state = initialize(square4, SolverConfig())
    with pytest.raises(InvalidArgumentError):
        solver.run(state, -1.0, dt=0.1)
    with pytest.raises(InvalidArgumentError):
        solver.run(state, 1.0, dt=0.1, stride=0)
    with pytest.raises(InvalidArgumentError):
        solver.step(state, 0.0)


def test_zero_span_run_records_initial_state(square4):
    solver, state = initialize(square4, SolverConfig())
    result = solver.run(state, 0.0, dt=0.1, observers={"mean_p": solver.pressure_mean})
    assert result.steps == 0
    assert len(result.series) == 1


def test_runs_are_deterministic(square4):
    cfg = SolverConfig(mu=0.1, order=2, boundary_velocity=shear_flow)
    finals = []
    for _ in range(2):
        solver, state = initialize(square4, cfg)
        finals.append(solver.run(state, 0.03, dt=0.01).state)
    np.testing.assert_array_equal(finals[0].u_curr.values, finals[1].u_curr.values)
    np.testing.assert_array_equal(finals[0].p_curr.values, finals[1].p_curr.values)


@pytest.mark.parametrize("bc_mode", ["tn", "wabe"])
def test_iterative_mode_matches_direct(square4, bc_mode):
    states = {}
    for mode in ("direct", "iterative"):
        cfg = SolverConfig(mu=0.1, cd=1.0, bc_mode=bc_mode, boundary_velocity=shear_flow, linear_solver=mode)
        solver, state = initialize(square4, cfg)
        states[mode] = solver.run(state, 0.02, dt=0.01).state
    np.testing.assert_allclose(states["iterative"].u_curr.values, states["direct"].u_curr.values, atol=1e-8)
    np.testing.assert_allclose(states["iterative"].p_curr.values, states["direct"].p_curr.values, atol=1e-6)


def test_step_shifts_history(square4):
    solver = SplitStepSolver(square4, SolverConfig(mu=0.1, boundary_velocity=shear_flow))
    state = solver.initialize()
    np.testing.assert_array_equal(state.u_prev.values, state.u_curr.values)
    nxt = solver.step(state, 0.01)
    assert nxt.u_prev is state.u_curr
    assert nxt.p_prev is state.p_curr
    assert nxt.momentum_curr is None
    assert nxt.t == pytest.approx(0.01)


def test_functional_series_pads_late_columns():
    series = FunctionalSeries()
    series.record(0, 0.0, {"a": 1.0})
    series.record(1, 0.5, {"a": 2.0, "b": 3.0})
    assert series.headers == ["step", "t", "a", "b"]
    assert math.isnan(series.values["b"][0])
    rows = list(series.rows())
    assert rows[1] == {"step": 1, "t": 0.5, "a": 2.0, "b": 3.0}
