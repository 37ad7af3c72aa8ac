"""
Finite-element operators and right-hand-side functionals for the split-step scheme.

Conventions in 2D: the curl of u is the scalar du2/dx - du1/dy and n x grad q is
the scalar n1 dq/dy - n2 dq/dx.
"""

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from elements import FiniteElementSpace, cap_degree
from errors import InvalidArgumentError, PreconditionError

SparseOperator = sp.csr_matrix

# F(x, y, t) -> (F1, F2); g(x, y, t) -> (g1, g2); div F(x, y, t) -> array
VectorField = Callable[[np.ndarray, np.ndarray, float], Tuple[np.ndarray, np.ndarray]]
ScalarField = Callable[[np.ndarray, np.ndarray, float], np.ndarray]


@dataclass
class FieldVector:
    space: FiniteElementSpace
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.space.size,):
            raise InvalidArgumentError(f"field has {self.values.size} coefficients, space needs {self.space.size}")

    @property
    def components(self) -> int:
        return self.space.components

    def component(self, c: int) -> np.ndarray:
        return self.space.split(self.values)[c]

    def copy(self) -> "FieldVector":
        return FieldVector(self.space, self.values.copy())

    @classmethod
    def zeros(cls, space: FiniteElementSpace) -> "FieldVector":
        return cls(space, np.zeros(space.size))

    @classmethod
    def interpolate(cls, space: FiniteElementSpace, func: Callable) -> "FieldVector":
        return cls(space, space.interpolate(func))


def _vector_at(func: Optional[VectorField], points: np.ndarray, t: float) -> np.ndarray:
    if func is None:
        return np.zeros(points.shape[:-1] + (2,))
    f1, f2 = func(points[..., 0], points[..., 1], t)
    return np.stack(np.broadcast_arrays(np.asarray(f1, dtype=float), np.asarray(f2, dtype=float)), axis=-1)


def _scalar_at(func: Optional[ScalarField], points: np.ndarray, t: float) -> np.ndarray:
    if func is None:
        return np.zeros(points.shape[:-1])
    return np.broadcast_to(np.asarray(func(points[..., 0], points[..., 1], t), dtype=float), points.shape[:-1])


def _assemble_matrix(space: FiniteElementSpace, local: np.ndarray) -> SparseOperator:
    dofs = space.cell_dofs
    nloc = dofs.shape[1]
    rows = np.repeat(dofs, nloc, axis=1).ravel()
    cols = np.tile(dofs, (1, nloc)).ravel()
    n = space.num_dofs
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def _assemble_vector(space: FiniteElementSpace, local: np.ndarray) -> np.ndarray:
    return np.bincount(space.cell_dofs.ravel(), weights=local.ravel(), minlength=space.num_dofs)


def _blockwise(space: FiniteElementSpace, scalar: SparseOperator) -> SparseOperator:
    if space.components == 1:
        return scalar
    return sp.block_diag([scalar] * space.components, format="csr")


def assemble_mass(space: FiniteElementSpace, degree: Optional[int] = None) -> SparseOperator:
    qd = space.quadrature(2 * space.order + 1 if degree is None else degree)
    local = np.einsum("tq,qi,qj->tij", qd.jxw, qd.basis, qd.basis)
    return _blockwise(space, _assemble_matrix(space, local))


def assemble_stiffness(space: FiniteElementSpace, degree: Optional[int] = None) -> SparseOperator:
    qd = space.quadrature(2 * space.order + 1 if degree is None else degree)
    local = np.einsum("tq,tqid,tqjd->tij", qd.jxw, qd.grads, qd.grads)
    return _blockwise(space, _assemble_matrix(space, local))


def assemble_load(space: FiniteElementSpace) -> np.ndarray:
    """b_i = (1, phi_i) on the scalar space."""
    qd = space.quadrature(space.order)
    local = np.einsum("tq,qi->ti", qd.jxw, qd.basis)
    return _assemble_vector(space, local)


def lumped_mass(space: FiniteElementSpace) -> np.ndarray:
    return np.asarray(assemble_mass(space.scalar()).sum(axis=1)).ravel()


def apply_momentum_rhs(
    u: FieldVector,
    p: FieldVector,
    forcing: Optional[VectorField] = None,
    t: float = 0.0,
    rho: float = 1.0,
    mu: float = 0.0,
    degree: Optional[int] = None,
    convection: bool = True,
) -> np.ndarray:
    """(L u + F, v) for every vector basis function v, blockwise by component.

    L u = -rho u.grad u - grad p + mu lap u, with the viscous term integrated by parts.
    """
    vspace, pspace = u.space, p.space
    qd = vspace.quadrature(cap_degree(3 * vspace.order if degree is None else degree))
    uq = vspace.values_at(u.values, qd)
    gu = vspace.gradients_at(u.values, qd)
    gp = pspace.gradients_at(p.values, qd)
    f = _vector_at(forcing, qd.points, t)
    body = f - gp
    if convection:
        body -= rho * np.einsum("tqj,tqcj->tqc", uq, gu)
    out = np.empty((2, vspace.num_dofs))
    for c in range(2):
        local = np.einsum("tq,tq,qi->ti", qd.jxw, body[..., c], qd.basis)
        if mu:
            local -= mu * np.einsum("tq,tqj,tqij->ti", qd.jxw, gu[..., c, :], qd.grads)
        out[c] = _assemble_vector(vspace, local)
    return out.ravel()


def assemble_ppe_rhs(
    u: FieldVector,
    div_forcing: Optional[ScalarField] = None,
    alpha: float = 0.0,
    t: float = 0.0,
    rho: float = 1.0,
    degree: Optional[int] = None,
    convection: bool = True,
) -> np.ndarray:
    """(-rho grad u : (grad u)^T + div F + alpha div u, phi_i) on the scalar space."""
    vspace = u.space
    qd = vspace.quadrature(cap_degree(2 * vspace.order + 1 if degree is None else degree))
    gu = vspace.gradients_at(u.values, qd)
    div = gu[..., 0, 0] + gu[..., 1, 1]
    integrand = _scalar_at(div_forcing, qd.points, t) + alpha * div
    if convection:
        integrand -= rho * np.einsum("tqij,tqji->tq", gu, gu)
    local = np.einsum("tq,tq,qi->ti", qd.jxw, integrand, qd.basis)
    return _assemble_vector(vspace, local)


def _curl(grads_u: np.ndarray) -> np.ndarray:
    return grads_u[..., 1, 0] - grads_u[..., 0, 1]


def _boundary_velocity_rate(g: Optional[VectorField], g_t: Optional[VectorField], points, t, delta=1e-6):
    if g_t is not None:
        return _vector_at(g_t, points, t)
    if g is None:
        return np.zeros(points.shape[:-1] + (2,))
    # forward difference, O(delta) accurate
    return (_vector_at(g, points, t + delta) - _vector_at(g, points, t)) / delta


def assemble_tn_boundary(
    u: FieldVector,
    g: Optional[VectorField] = None,
    g_t: Optional[VectorField] = None,
    forcing: Optional[VectorField] = None,
    t: float = 0.0,
    rho: float = 1.0,
    mu: float = 0.0,
    tags: Optional[Sequence[int]] = None,
    convection: bool = True,
) -> np.ndarray:
    """<n.(-rho dg/dt - rho g.grad u + F), q> + mu <curl u, n x grad q> over the tagged boundary.

    The weak pressure equation takes this functional with a minus sign on its
    right side. When g_t is missing it is formed by forward differencing g.
    """
    vspace = u.space
    bq = vspace.boundary_quadrature(tags, degree=cap_degree(3 * vspace.order))
    cells = bq.cells
    local_u = vspace.split(u.values)[:, vspace.cell_dofs[cells]]  # (2, B, N)
    gu = np.einsum("cbn,bqnj->bqcj", local_u, bq.grads)
    gvals = _vector_at(g, bq.points, t)
    gdot = _boundary_velocity_rate(g, g_t, bq.points, t)
    f = _vector_at(forcing, bq.points, t)
    vec = f - rho * gdot
    if convection:
        vec -= rho * np.einsum("bqj,bqcj->bqc", gvals, gu)
    normal_part = np.einsum("bqc,bc->bq", vec, bq.normals)
    local = np.einsum("bq,bq,bqi->bi", bq.jxw, normal_part, bq.basis)
    if mu:
        n_cross_grad = bq.normals[:, None, None, 0] * bq.grads[..., 1] - bq.normals[:, None, None, 1] * bq.grads[..., 0]
        local += mu * np.einsum("bq,bq,bqi->bi", bq.jxw, _curl(gu), n_cross_grad)
    return np.bincount(vspace.cell_dofs[cells].ravel(), weights=local.ravel(), minlength=vspace.num_dofs)


@dataclass(frozen=True)
class WabeRows:
    """Replacement pressure rows for the boundary dofs `dofs` (sorted)."""

    dofs: np.ndarray
    matrix: SparseOperator  # (len(dofs), N)
    rhs: np.ndarray


def _wabe_pairs(space: FiniteElementSpace, dofs: np.ndarray):
    mask = np.isin(space.cell_dofs, dofs)
    cells, locs = np.nonzero(mask)
    rows = np.searchsorted(dofs, space.cell_dofs[cells, locs])
    return cells, locs, rows


def wabe_matrix(space: FiniteElementSpace, dofs: np.ndarray, normals: np.ndarray) -> SparseOperator:
    """Rows (n_ib . grad phi_j, phi_ib); depends on geometry only."""
    qd = space.quadrature(2 * space.order + 1)
    cells, locs, rows = _wabe_pairs(space, dofs)
    n = normals[rows]
    ngrad = np.einsum("pqbj,pj->pqb", qd.grads[cells], n)
    vals = np.einsum("pq,qp,pqb->pb", qd.jxw[cells], qd.basis[:, locs], ngrad)
    nloc = space.cell_dofs.shape[1]
    r = np.repeat(rows, nloc)
    c = space.cell_dofs[cells].ravel()
    return sp.coo_matrix((vals.ravel(), (r, c)), shape=(len(dofs), space.num_dofs)).tocsr()


def wabe_rhs(
    u_new: FieldVector,
    u_old: FieldVector,
    dt: float,
    dofs: np.ndarray,
    normals: np.ndarray,
    forcing: Optional[VectorField] = None,
    t: float = 0.0,
    rho: float = 1.0,
    mu: float = 0.0,
    include_boundary_term: bool = False,
    convection: bool = True,
) -> np.ndarray:
    vspace = u_new.space
    qd = vspace.quadrature(cap_degree(3 * vspace.order))
    cells, locs, rows = _wabe_pairs(vspace, dofs)
    uq = vspace.values_at(u_new.values, qd)
    gu = vspace.gradients_at(u_new.values, qd)
    u_t = vspace.values_at((u_new.values - u_old.values) / dt, qd)
    accel = u_t + np.einsum("tqj,tqcj->tqc", uq, gu) if convection else u_t
    momentum = rho * accel - _vector_at(forcing, qd.points, t)
    n = normals[rows]
    phi = qd.basis[:, locs].T  # (P, Q)
    jxw = qd.jxw[cells]
    vals = -np.einsum("pq,pq,pqc,pc->p", jxw, phi, momentum[cells], n)
    if mu:
        grads = qd.grads[cells, :, locs, :]  # (P, Q, 2)
        n_cross_grad = n[:, None, 0] * grads[..., 1] - n[:, None, 1] * grads[..., 0]
        vals += mu * np.einsum("pq,pq,pq->p", jxw, _curl(gu)[cells], n_cross_grad)
    rhs = np.bincount(rows, weights=vals, minlength=len(dofs))
    if include_boundary_term and mu:
        rhs += _wabe_boundary_term(u_new, dofs, normals, mu)
    return rhs


def _wabe_boundary_term(u: FieldVector, dofs: np.ndarray, normals: np.ndarray, mu: float) -> np.ndarray:
    """-mu <curl u, phi_ib (n_ib x n)> along the boundary edges touching each row dof."""
    vspace = u.space
    bq = vspace.boundary_quadrature(None, degree=cap_degree(2 * vspace.order))
    local_u = vspace.split(u.values)[:, vspace.cell_dofs[bq.cells]]
    curl = _curl(np.einsum("cbn,bqnj->bqcj", local_u, bq.grads))
    edge_dofs = vspace.cell_dofs[bq.cells]
    out = np.zeros(len(dofs))
    for r, d in enumerate(dofs.tolist()):
        b, a = np.nonzero(edge_dofs == d)
        if len(b) == 0:
            continue
        nd = normals[r]
        cross = nd[0] * bq.normals[b, 1] - nd[1] * bq.normals[b, 0]
        out[r] = -mu * np.sum(bq.jxw[b] * curl[b] * bq.basis[b, :, a] * cross[:, None])
    return out


def assemble_wabe_rows(
    u_new: FieldVector,
    u_old: FieldVector,
    dt: float,
    forcing: Optional[VectorField] = None,
    t: float = 0.0,
    rho: float = 1.0,
    mu: float = 0.0,
    tags: Optional[Sequence[int]] = None,
    normals: Optional[Tuple[np.ndarray, np.ndarray]] = None,
    include_boundary_term: bool = False,
    convection: bool = True,
) -> WabeRows:
    """Node-normal projected momentum equation tested with each boundary basis function.

    du/dt is (u_new - u_old) / dt.
    """
    vspace = u_new.space
    if normals is None:
        if not vspace.mesh.node_normals:
            raise PreconditionError("mesh node normals have not been computed")
        normals = vspace.boundary_dof_normals(tags)
    dofs, nrm = normals
    matrix = wabe_matrix(vspace.scalar(), dofs, nrm)
    rhs = wabe_rhs(u_new, u_old, dt, dofs, nrm, forcing, t, rho, mu, include_boundary_term, convection)
    return WabeRows(dofs, matrix, rhs)


@dataclass(frozen=True)
class DerivativeField:
    """Element-wise derivative quantity sampled at quadrature points."""

    values: np.ndarray  # (T, Q)
    jxw: np.ndarray
    linf: float
    l2: float

    @property
    def cell_means(self) -> np.ndarray:
        return (self.values * self.jxw).sum(axis=1) / self.jxw.sum(axis=1)


def _derivative_field(u: FieldVector, kind: str, degree: Optional[int]) -> DerivativeField:
    vspace = u.space
    qd = vspace.quadrature(2 * vspace.order + 1 if degree is None else degree)
    gu = vspace.gradients_at(u.values, qd)
    vals = gu[..., 0, 0] + gu[..., 1, 1] if kind == "div" else _curl(gu)
    return DerivativeField(vals, qd.jxw, float(np.abs(vals).max()), float(np.sqrt(np.sum(qd.jxw * vals ** 2))))


def eval_divergence(u: FieldVector, degree: Optional[int] = None) -> DerivativeField:
    return _derivative_field(u, "div", degree)


def eval_vorticity(u: FieldVector, degree: Optional[int] = None) -> DerivativeField:
    return _derivative_field(u, "curl", degree)


def assemble_vorticity_load(u: FieldVector, degree: Optional[int] = None) -> np.ndarray:
    """b_i = (v_x - u_y, phi_i) on the scalar space of u."""
    vspace = u.space
    qd = vspace.quadrature(2 * vspace.order + 1 if degree is None else degree)
    curl = _curl(vspace.gradients_at(u.values, qd))
    local = np.einsum("tq,tq,qi->ti", qd.jxw, curl, qd.basis)
    return _assemble_vector(vspace.scalar(), local)


def nodal_average(u: FieldVector, kind: str) -> np.ndarray:
    """Divergence ('div') or vorticity ('curl') averaged onto the scalar dofs."""
    vspace = u.space
    ref_grads = vspace.element.grad(vspace.element.node_ref_coords)  # (N, N, 2)
    grads = np.einsum("tij,anj->tani", vspace.inverse_transposes, ref_grads)
    local = vspace.split(u.values)[:, vspace.cell_dofs]  # (2, T, N)
    gu = np.einsum("ctn,tanj->tacj", local, grads)
    vals = gu[..., 0, 0] + gu[..., 1, 1] if kind == "div" else _curl(gu)
    total = np.bincount(vspace.cell_dofs.ravel(), weights=vals.ravel(), minlength=vspace.num_dofs)
    count = np.bincount(vspace.cell_dofs.ravel(), minlength=vspace.num_dofs)
    return total / np.maximum(count, 1)


def dirichlet_values(space: FiniteElementSpace, tags: Optional[Sequence[int]], g: Optional[VectorField], t: float):
    """Constrained coefficient indices and the nodal values of g there."""
    dofs = space.boundary_dofs_for(tags)
    pts = space.dof_coords[dofs]
    if space.components == 1:
        vals = _scalar_at(g, pts, t) if g is not None else np.zeros(len(dofs))
        return dofs, vals
    vals = _vector_at(g, pts, t)
    n = space.num_dofs
    return np.concatenate([dofs, dofs + n]), np.concatenate([vals[:, 0], vals[:, 1]])


def constrain(A: SparseOperator, rhs: np.ndarray, dofs: np.ndarray, values: np.ndarray, symmetric: bool = False):
    """Replace rows `dofs` by identity rows with right side `values`.

    With symmetric=True the constrained columns are also eliminated and moved to
    the right side, which keeps an SPD matrix SPD.
    """
    n = A.shape[0]
    keep = np.ones(n)
    keep[dofs] = 0.0
    D = sp.diags(keep)
    rhs = np.array(rhs, dtype=float, copy=True)
    if symmetric:
        x_b = np.zeros(n)
        x_b[dofs] = values
        rhs -= A @ x_b
        A_mod = D @ A @ D + sp.diags(1.0 - keep)
    else:
        A_mod = D @ A + sp.diags(1.0 - keep)
    rhs[dofs] = values
    return A_mod.tocsr(), rhs


def apply_dirichlet(
    A: SparseOperator,
    rhs: np.ndarray,
    space: FiniteElementSpace,
    tags: Optional[Sequence[int]],
    g: Optional[VectorField],
    t: float,
    symmetric: bool = False,
):
    dofs, vals = dirichlet_values(space, tags, g, t)
    return constrain(A, rhs, dofs, vals, symmetric)
