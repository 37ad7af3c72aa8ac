"""
Legacy ASCII VTK output of a flow state.

P_n fields are written on the uniformly refined triangulation whose vertices
are the dof nodes, so every dof becomes a VTK point.
"""

import os

from assembly import nodal_average
from errors import InvalidArgumentError, OutputError
from mesh import refine_uniform

VTK_TRIANGLE = 5


def _scalars(name, values):
    lines = [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
    lines += [f"{v:.10g}" for v in values]
    return lines


def vtk_lines(state, space, title="split-step flow"):
    if state.u_curr.space.num_dofs != space.num_dofs:
        raise InvalidArgumentError("state does not live on the given space")
    if state.p_curr.space.num_dofs != space.num_dofs:
        raise InvalidArgumentError("velocity and pressure must share the dof layout")
    points = space.dof_coords
    cells = refine_uniform(space.mesh, space.order).triangles
    u, v = space.split(state.u_curr.values)
    n = len(points)

    lines = ["# vtk DataFile Version 3.0", f"{title} t={state.t:.10g}", "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {n} double")
    lines += [f"{x:.12g} {y:.12g} 0" for x, y in points]
    lines.append(f"CELLS {len(cells)} {4 * len(cells)}")
    lines += [f"3 {a} {b} {c}" for a, b, c in cells]
    lines.append(f"CELL_TYPES {len(cells)}")
    lines += [str(VTK_TRIANGLE)] * len(cells)

    lines.append(f"POINT_DATA {n}")
    lines.append("VECTORS velocity double")
    lines += [f"{a:.10g} {b:.10g} 0" for a, b in zip(u, v)]
    lines += _scalars("u", u)
    lines += _scalars("v", v)
    lines += _scalars("p", state.p_curr.values)
    lines += _scalars("vorticity", nodal_average(state.u_curr, "curl"))
    lines += _scalars("divergence", nodal_average(state.u_curr, "div"))
    return lines


def write_vtk(state, space, path, title="split-step flow"):
    """Write `state` to `path`; returns the number of points written."""
    lines = vtk_lines(state, space, title)
    try:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", encoding="ascii") as f:
            f.write("\n".join(lines))
            f.write("\n")
    except OSError as e:
        raise OutputError(path, e) from e
    return space.num_dofs
