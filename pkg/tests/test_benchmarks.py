from types import SimpleNamespace

import numpy as np
import pytest

from assembly import FieldVector
from benchmarks import (
    CYLINDER_ALPHA,
    GHIA_U,
    GHIA_V,
    CavityConfig,
    CavityResult,
    CenterlineProfile,
    CylinderConfig,
    cavity_boundary_u0,
    cavity_checks,
    cavity_contour_rows,
    cavity_lid,
    compare_centerlines,
    cylinder_boundary,
    cylinder_inflow,
    drag_lift_dp,
    field_contours,
    run_cavity,
    run_cylinder,
    stream_function,
)
from elements import build_dof_map
from errors import InvalidArgumentError
from mesh import CYLINDER, Mesh, gen_unit_square
from splitstep import FlowState, boundary_mismatch


def _state(space, u_func=None, p_func=None):
    vec = space.vector()
    u = FieldVector.zeros(vec) if u_func is None else FieldVector.interpolate(vec, u_func)
    p = FieldVector.zeros(space) if p_func is None else FieldVector.interpolate(space, p_func)
    return FlowState(u, u, p, p)


def _ring_area(mesh):
    edges = mesh.boundary_edges[mesh.boundary_tags == CYLINDER]
    a, b = mesh.vertices[edges[:, 0]], mesh.vertices[edges[:, 1]]
    return abs(0.5 * np.sum(a[:, 0] * b[:, 1] - b[:, 0] * a[:, 1]))


def test_lid_profile():
    assert cavity_boundary_u0(0.5) == pytest.approx(1.0, abs=1e-12)
    xs = np.linspace(0, 1, 11)
    np.testing.assert_allclose(cavity_boundary_u0(xs), cavity_boundary_u0(1 - xs), atol=1e-12)
    assert cavity_boundary_u0(0.0) < 0.3
    u, v = cavity_lid(np.array([0.5, 0.5]), np.array([1.0, 0.0]), 0.0)
    np.testing.assert_allclose(u, [cavity_boundary_u0(0.5), 0.0])
    np.testing.assert_allclose(v, 0.0)


def test_cylinder_inflow():
    u, v = cylinder_inflow(0.205, 4.0)
    assert u == pytest.approx(1.5)
    assert v == 0.0
    u, _ = cylinder_boundary(np.array([0.0, 1.0, 2.2]), np.array([0.205, 0.205, 0.205]), 4.0)
    np.testing.assert_allclose(u, [1.5, 0.0, 1.5])


def test_config_validation_and_damping():
    with pytest.raises(InvalidArgumentError):
        CavityConfig(m=1)
    with pytest.raises(InvalidArgumentError):
        CavityConfig(sample_interval=0.0)
    with pytest.raises(InvalidArgumentError):
        CylinderConfig(refine=0)
    assert CylinderConfig().solver_config().alpha == CYLINDER_ALPHA
    explicit = CylinderConfig(cd=0.5).solver_config()
    assert explicit.alpha is None and explicit.cd == 0.5
    assert CavityConfig(nu=2e-3, rho=2.0).solver_config().mu == pytest.approx(4e-3)


def test_resting_fluid_has_no_force(cylinder_mesh):
    space = build_dof_map(cylinder_mesh, 1)
    assert drag_lift_dp(_state(space), mu=1e-3) == (0.0, 0.0, 0.0)
    drag, lift, dp = drag_lift_dp(_state(space, p_func=lambda x, y: 1.0 + 0 * x), mu=1e-3)
    assert drag == pytest.approx(0.0, abs=1e-12)
    assert lift == pytest.approx(0.0, abs=1e-12)
    assert dp == pytest.approx(0.0, abs=1e-12)


def test_inviscid_free_stream_has_no_force(cylinder_mesh):
    space = build_dof_map(cylinder_mesh, 2)
    drag, lift, dp = drag_lift_dp(_state(space, u_func=lambda x, y: (1.0 + 0 * x, 0 * y)), mu=0.0)
    assert (drag, lift, dp) == (0.0, 0.0, 0.0)


def test_linear_pressure_force(cylinder_mesh):
    space = build_dof_map(cylinder_mesh, 1)
    drag, lift, dp = drag_lift_dp(_state(space, p_func=lambda x, y: x), mu=1e-3)
    # force = -area of the body times grad p; C = 2 F / (rho U^2 D) with D = 0.1
    assert drag == pytest.approx(-20.0 * _ring_area(cylinder_mesh), rel=1e-10)
    assert lift == pytest.approx(0.0, abs=1e-12)
    assert dp == pytest.approx(-0.1, abs=1e-12)


def test_shear_stress_integrates_to_zero(cylinder_mesh):
    space = build_dof_map(cylinder_mesh, 2)
    drag, lift, _ = drag_lift_dp(_state(space, u_func=lambda x, y: (y, 0 * x)), mu=0.5)
    assert drag == pytest.approx(0.0, abs=1e-11)
    assert lift == pytest.approx(0.0, abs=1e-11)


def test_force_needs_a_cylinder(square4):
    untagged = Mesh(square4.vertices, square4.triangles, square4.boundary_edges, np.ones(len(square4.boundary_edges)))
    with pytest.raises(InvalidArgumentError):
        drag_lift_dp(_state(build_dof_map(untagged, 1)), mu=1.0)


def _profile(t, u_shift=0.0):
    return CenterlineProfile(t, GHIA_U[::-1, 0], GHIA_U[::-1, 1] + u_shift, GHIA_V[::-1, 0], GHIA_V[::-1, 1])


def test_reference_profiles_compare_exactly():
    deviations = compare_centerlines(_profile(0.0))
    assert deviations["u_max_deviation"] == pytest.approx(0.0, abs=1e-12)
    assert deviations["v_max_deviation"] == pytest.approx(0.0, abs=1e-12)


def test_cavity_checks_on_given_profiles():
    profiles = [_profile(t, u_shift=0.01 * (50 - t) / 10) for t in (30.0, 40.0, 50.0)]
    result = CavityResult(CavityConfig(), None, None, None, profiles)
    checks = cavity_checks(result, window=10.0)
    assert checks["u_min"] == pytest.approx(-0.38289)
    assert checks["y_at_u_min"] == pytest.approx(0.1719)
    assert checks["interior_minima"] == 1
    assert checks["profile_change"] == pytest.approx(0.01 / 1.0, rel=1e-9)


def test_field_contours_of_a_linear_field(square4):
    space = build_dof_map(square4, 1)
    rows = list(field_contours(space, space.interpolate(lambda x, y: x), [0.45], n=11))
    assert {r["curve_id"] for r in rows} == {0}
    np.testing.assert_allclose([r["x"] for r in rows], 0.45, atol=1e-12)


def test_short_cavity_run():
    config = CavityConfig(m=8, t_final=0.2, sample_interval=0.1, profile_points=17)
    result = run_cavity(config)
    assert result.state.t == pytest.approx(0.2)
    assert len(result.profiles) == len(result.series) >= 3
    assert result.final_profile.u[-1] == pytest.approx(cavity_boundary_u0(0.5), abs=1e-12)
    assert boundary_mismatch(result.solver, result.state) < 1e-12
    assert {"u_min", "y_at_u_min", "div_l2", "div_linf"} <= set(result.series.names)
    rows = list(cavity_contour_rows(result, n=21))
    assert {r["field"] for r in rows} <= {"streamfunction", "vorticity", "pressure"}
    psi = stream_function(result.state.u_curr)
    # the lid turns the primary vortex clockwise
    assert psi.min() < 0
    assert abs(psi.max()) < abs(psi.min())
    np.testing.assert_allclose(psi[result.solver.pspace.boundary_dofs], 0.0, atol=1e-12)


@pytest.mark.slow
def test_short_cylinder_run():
    result = run_cylinder(CylinderConfig(refine=1, t_final=0.02, stride=5))
    assert result.summary["dofs"] == 486
    assert result.summary["alpha"] == CYLINDER_ALPHA
    assert set(result.series.names) == {"drag", "lift", "dp"}
    assert np.all(np.isfinite(result.series.column("drag")))
    assert result.state.t == pytest.approx(0.02)


def _cellular_flow(x, y):
    return np.pi * np.sin(np.pi * x) * np.cos(np.pi * y), -np.pi * np.cos(np.pi * x) * np.sin(np.pi * y)


@pytest.mark.parametrize("linear_solver", ["direct", "iterative"])
def test_stream_function_of_a_cellular_flow(linear_solver):
    errors = []
    for m in (4, 8):
        space = build_dof_map(gen_unit_square(m), 2)
        u = FieldVector.interpolate(space.vector(), _cellular_flow)
        psi = stream_function(u, linear_solver)
        x, y = space.dof_coords.T
        errors.append(np.max(np.abs(psi - np.sin(np.pi * x) * np.sin(np.pi * y))))
    assert errors[1] < 0.02
    assert errors[0] / errors[1] > 3.0


def test_cavity_contours_reuse_a_given_stream_function(square4):
    space = build_dof_map(square4, 1)
    state = _state(space)
    result = CavityResult(CavityConfig(), SimpleNamespace(pspace=space), state, None, [])
    psi = space.interpolate(lambda x, y: x - 0.5)
    rows = [r for r in cavity_contour_rows(result, n=11, psi=psi) if r["field"] == "streamfunction"]
    assert rows
    np.testing.assert_allclose([r["x"] for r in rows], 0.5 + np.array([r["level"] for r in rows]), atol=1e-12)
