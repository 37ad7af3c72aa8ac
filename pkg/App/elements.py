"""
Lagrange P_n elements on triangles, quadrature rules and global dof layouts.
"""

import math
import threading
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from errors import InvalidArgumentError
from mesh import Mesh, average_edge_normals, edge_lattice_positions, lattice_numbering, lattice_triples

SUPPORTED_ORDERS = (1, 2, 4)
MAX_QUADRATURE_DEGREE = 10

# reference vertices v0, v1, v2
REF_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def _to_bary(ref_points) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(ref_points, dtype=float))
    return np.column_stack([1.0 - pts[:, 0] - pts[:, 1], pts[:, 0], pts[:, 1]])


@dataclass(frozen=True)
class ReferenceElement:
    """Equispaced Lagrange element of order n on the reference triangle.

    Node i sits at barycentric coordinates triples[i] / n and its basis
    function is the product P_a(l0) P_b(l1) P_c(l2) of the 1D factors
    P_m(l) = prod_{q<m} (n l - q) / (q + 1).
    """

    order: int
    triples: np.ndarray

    @property
    def node_count(self) -> int:
        return len(self.triples)

    @property
    def node_coords(self) -> np.ndarray:
        """Barycentric coordinates of the nodes."""
        return self.triples / self.order

    @property
    def node_ref_coords(self) -> np.ndarray:
        return self.node_coords[:, 1:]

    def _factors(self, bary: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        n = self.order
        q = len(bary)
        P = np.empty((n + 1, q, 3))
        dP = np.empty((n + 1, q, 3))
        P[0], dP[0] = 1.0, 0.0
        for m in range(1, n + 1):
            f = (n * bary - (m - 1)) / m
            P[m] = P[m - 1] * f
            dP[m] = dP[m - 1] * f + P[m - 1] * (n / m)
        return P, dP

    def basis(self, ref_points) -> np.ndarray:
        """(Q, N) basis values at reference points (xi, eta)."""
        P, _ = self._factors(_to_bary(ref_points))
        a, b, c = self.triples.T
        return P[a, :, 0].T * P[b, :, 1].T * P[c, :, 2].T

    def grad(self, ref_points) -> np.ndarray:
        """(Q, N, 2) reference gradients d/dxi, d/deta."""
        P, dP = self._factors(_to_bary(ref_points))
        a, b, c = self.triples.T
        f0, f1, f2 = P[a, :, 0].T, P[b, :, 1].T, P[c, :, 2].T
        d0, d1, d2 = dP[a, :, 0].T, dP[b, :, 1].T, dP[c, :, 2].T
        dl0 = d0 * f1 * f2
        dl1 = f0 * d1 * f2
        dl2 = f0 * f1 * d2
        return np.stack([dl1 - dl0, dl2 - dl0], axis=-1)


def make_reference_element(n: int) -> ReferenceElement:
    if n not in SUPPORTED_ORDERS:
        raise InvalidArgumentError(f"element order must be one of {SUPPORTED_ORDERS}, got {n}")
    return ReferenceElement(order=n, triples=lattice_triples(n))


@dataclass(frozen=True)
class QuadratureRule:
    degree: int
    points: np.ndarray  # barycentric, (Q, 3)
    weights: np.ndarray  # sum to 1/2

    @property
    def ref_points(self) -> np.ndarray:
        return self.points[:, 1:]

    def integrate(self, f: Callable) -> float:
        """Integral over the reference triangle of f(xi, eta)."""
        x, y = self.ref_points.T
        return float(np.dot(self.weights, f(x, y)))


def _orbit3(a: float) -> list:
    b = 1.0 - 2.0 * a
    return [(b, a, a), (a, b, a), (a, a, b)]


_SYMMETRIC_RULES = {
    1: ([(1 / 3, 1 / 3, 1 / 3)], [1.0]),
    2: (_orbit3(1 / 6), [1 / 3] * 3),
    4: (
        _orbit3(0.445948490915965) + _orbit3(0.091576213509771),
        [0.223381589678011] * 3 + [0.109951743655322] * 3,
    ),
    5: (
        [(1 / 3, 1 / 3, 1 / 3)] + _orbit3(0.470142064105115) + _orbit3(0.101286507323456),
        [0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3,
    ),
}


def _conical_rule(degree: int) -> Tuple[np.ndarray, np.ndarray]:
    m = (degree + 3) // 2
    x, w = np.polynomial.legendre.leggauss(m)
    u = 0.5 * (x + 1.0)
    wu = 0.5 * w
    U, V = np.meshgrid(u, u, indexing="ij")
    W = np.outer(wu, wu) * (1.0 - U)
    xi = U.ravel()
    eta = ((1.0 - U) * V).ravel()
    bary = np.column_stack([1.0 - xi - eta, xi, eta])
    return bary, W.ravel()


def make_quadrature(degree: int) -> QuadratureRule:
    """Positive-weight rule exact for polynomials of total degree <= `degree`."""
    if not 1 <= degree <= MAX_QUADRATURE_DEGREE:
        raise InvalidArgumentError(f"quadrature degree must lie in 1..{MAX_QUADRATURE_DEGREE}, got {degree}")
    key = degree if degree != 3 else 4
    if key in _SYMMETRIC_RULES:
        pts, wts = _SYMMETRIC_RULES[key]
        points = np.array(pts, dtype=float)
        weights = 0.5 * np.array(wts, dtype=float)
        weights *= 0.5 / weights.sum()
    else:
        points, weights = _conical_rule(degree)
    return QuadratureRule(degree=degree, points=points, weights=weights)


def edge_quadrature(degree: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points on [0, 1] with weights summing to 1."""
    m = max(1, math.ceil((degree + 1) / 2))
    x, w = np.polynomial.legendre.leggauss(m)
    return 0.5 * (x + 1.0), 0.5 * w


def cap_degree(degree: int) -> int:
    return max(1, min(int(degree), MAX_QUADRATURE_DEGREE))


@dataclass(frozen=True)
class QuadratureData:
    """Element-wise quadrature values for one rule on one space."""

    rule: QuadratureRule
    basis: np.ndarray  # (Q, N)
    grads: np.ndarray  # (T, Q, N, 2) physical
    jxw: np.ndarray  # (T, Q) weight times |det J|
    points: np.ndarray  # (T, Q, 2)


@dataclass(frozen=True)
class BoundaryQuadrature:
    """Quadrature along a set of boundary edges, evaluated in the owning triangles."""

    edge_ids: np.ndarray  # (B,) indices into mesh.boundary_edges
    cells: np.ndarray  # (B,)
    basis: np.ndarray  # (B, Q, N)
    grads: np.ndarray  # (B, Q, N, 2)
    jxw: np.ndarray  # (B, Q) weight times edge length
    points: np.ndarray  # (B, Q, 2)
    normals: np.ndarray  # (B, 2) outward


@dataclass(frozen=True, eq=False)
class FiniteElementSpace:
    """Global P_n layout over a mesh, scalar (components=1) or 2-vector.

    Vector coefficients are stored blockwise: component c of scalar dof i
    lives at c * num_dofs + i.
    """

    mesh: Mesh
    element: ReferenceElement
    components: int
    cell_dofs: np.ndarray
    dof_coords: np.ndarray
    boundary_dofs_by_tag: Dict[int, np.ndarray]
    _cache: Dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def order(self) -> int:
        return self.element.order

    @property
    def num_dofs(self) -> int:
        return len(self.dof_coords)

    @property
    def size(self) -> int:
        return self.num_dofs * self.components

    @cached_property
    def boundary_dofs(self) -> np.ndarray:
        if not self.boundary_dofs_by_tag:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate(list(self.boundary_dofs_by_tag.values())))

    def boundary_dofs_for(self, tags: Optional[Sequence[int]] = None) -> np.ndarray:
        if tags is None:
            return self.boundary_dofs
        parts = [self.boundary_dofs_by_tag[t] for t in tags if t in self.boundary_dofs_by_tag]
        return np.unique(np.concatenate(parts)) if parts else np.zeros(0, dtype=np.int64)

    def _sibling(self, components: int) -> "FiniteElementSpace":
        if components == self.components:
            return self
        key = ("sibling", components)
        with self._lock:
            if key not in self._cache:
                other = FiniteElementSpace(
                    self.mesh, self.element, components, self.cell_dofs, self.dof_coords, self.boundary_dofs_by_tag
                )
                other._cache.update({k: v for k, v in self._cache.items() if k[0] != "sibling"})
                other._cache[("sibling", self.components)] = self
                self._cache[key] = other
            return self._cache[key]

    def scalar(self) -> "FiniteElementSpace":
        return self._sibling(1)

    def vector(self) -> "FiniteElementSpace":
        return self._sibling(2)

    @cached_property
    def jacobians(self) -> np.ndarray:
        v = self.mesh.vertices[self.mesh.triangles]
        J = np.empty((self.mesh.num_triangles, 2, 2))
        J[:, :, 0] = v[:, 1] - v[:, 0]
        J[:, :, 1] = v[:, 2] - v[:, 0]
        return J

    @cached_property
    def inverse_transposes(self) -> np.ndarray:
        return np.transpose(np.linalg.inv(self.jacobians), (0, 2, 1))

    @property
    def dets(self) -> np.ndarray:
        return 2.0 * self.mesh.signed_areas

    def quadrature(self, degree: int) -> QuadratureData:
        degree = cap_degree(degree)
        key = ("quad", degree)
        with self._lock:
            cached = self._cache.get(key)
        if cached is not None:
            return cached
        rule = make_quadrature(degree)
        ref = rule.ref_points
        basis = self.element.basis(ref)
        ref_grads = self.element.grad(ref)
        grads = np.einsum("tij,qnj->tqni", self.inverse_transposes, ref_grads)
        jxw = np.abs(self.dets)[:, None] * rule.weights[None, :]
        v = self.mesh.vertices[self.mesh.triangles]
        points = v[:, None, 0, :] + np.einsum("tij,qj->tqi", self.jacobians, ref)
        data = QuadratureData(rule, basis, grads, jxw, points)
        with self._lock:
            self._cache[key] = data
        return data

    def boundary_quadrature(self, tags: Optional[Sequence[int]] = None, degree: Optional[int] = None) -> BoundaryQuadrature:
        degree = 2 * self.order + 1 if degree is None else degree
        tag_key = None if tags is None else tuple(sorted(tags))
        key = ("bquad", tag_key, degree)
        with self._lock:
            cached = self._cache.get(key)
        if cached is not None:
            return cached
        mesh = self.mesh
        mask = np.ones(len(mesh.boundary_edges), dtype=bool) if tags is None else np.isin(mesh.boundary_tags, list(tags))
        edge_ids = np.flatnonzero(mask)
        owners, local = mesh.boundary_owners
        cells, loc = owners[edge_ids], local[edge_ids]
        s, w = edge_quadrature(degree)
        per_local_basis, per_local_grad = [], []
        for k in range(3):
            ref = REF_VERTICES[k] + s[:, None] * (REF_VERTICES[(k + 1) % 3] - REF_VERTICES[k])
            per_local_basis.append(self.element.basis(ref))
            per_local_grad.append(self.element.grad(ref))
        basis = np.stack(per_local_basis)[loc]
        ref_grads = np.stack(per_local_grad)[loc]
        grads = np.einsum("bij,bqnj->bqni", self.inverse_transposes[cells], ref_grads)
        a = mesh.vertices[mesh.boundary_edges[edge_ids, 0]]
        b = mesh.vertices[mesh.boundary_edges[edge_ids, 1]]
        points = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
        jxw = mesh.boundary_edge_lengths[edge_ids][:, None] * w[None, :]
        data = BoundaryQuadrature(edge_ids, cells, basis, grads, jxw, points, mesh.boundary_edge_normals[edge_ids])
        with self._lock:
            self._cache[key] = data
        return data

    # Field helpers on raw coefficient arrays

    def split(self, values: np.ndarray) -> np.ndarray:
        """(components, N) view of a coefficient array."""
        return np.asarray(values).reshape(self.components, self.num_dofs)

    def values_at(self, values: np.ndarray, qd: QuadratureData) -> np.ndarray:
        """(T, Q) for scalars, (T, Q, 2) for vectors."""
        comps = self.split(values)
        local = comps[:, self.cell_dofs]  # (C, T, N)
        out = np.einsum("ctn,qn->tqc", local, qd.basis)
        return out[..., 0] if self.components == 1 else out

    def gradients_at(self, values: np.ndarray, qd: QuadratureData) -> np.ndarray:
        """(T, Q, 2) for scalars; (T, Q, 2, 2) with [..., i, j] = d u_i / d x_j for vectors."""
        comps = self.split(values)
        local = comps[:, self.cell_dofs]
        out = np.einsum("ctn,tqnj->tqcj", local, qd.grads)
        return out[..., 0, :] if self.components == 1 else out

    def interpolate(self, func: Callable) -> np.ndarray:
        """Nodal interpolant of func(x, y) (scalar) or func(x, y) -> (f1, f2)."""
        x, y = self.dof_coords[:, 0], self.dof_coords[:, 1]
        vals = func(x, y)
        if self.components == 1:
            return np.broadcast_to(np.asarray(vals, dtype=float), x.shape).copy()
        return np.concatenate([np.broadcast_to(np.asarray(v, dtype=float), x.shape) for v in vals])

    def evaluate(self, values: np.ndarray, points) -> np.ndarray:
        """Point values of the field; (P,) for scalars, (P, 2) for vectors."""
        cells, bary = self.mesh.locate(points)
        phi = np.stack([self.element.basis(b[None, 1:])[0] for b in bary])
        comps = self.split(values)
        out = np.einsum("cpn,pn->pc", comps[:, self.cell_dofs[cells]], phi)
        return out[:, 0] if self.components == 1 else out

    def boundary_dof_normals(self, tags: Optional[Sequence[int]] = None) -> Tuple[np.ndarray, np.ndarray]:
        """Boundary dofs of the tag set and their unit outward normals.

        Vertex dofs average the adjacent tagged edge normals; dofs inside an
        edge take that edge's normal.
        """
        mesh = self.mesh
        if tags is None and mesh.node_normals:
            vertex_normals = mesh.node_normals
        else:
            mask = None if tags is None else np.isin(mesh.boundary_tags, list(tags))
            vertex_normals = average_edge_normals(mesh, mask, require_pair=False)
        dofs = self.boundary_dofs_for(tags)
        normals = np.empty((len(dofs), 2))
        edge_normal = {}
        n = self.order
        if n > 1:
            owners, local = mesh.boundary_owners
            along = edge_lattice_positions(n)
            keep = slice(None) if tags is None else np.isin(mesh.boundary_tags, list(tags))
            for e in np.arange(len(mesh.boundary_edges))[keep]:
                for lj in along[local[e]][1:-1]:
                    edge_normal[int(self.cell_dofs[owners[e], lj])] = mesh.boundary_edge_normals[e]
        for i, d in enumerate(dofs.tolist()):
            normals[i] = vertex_normals[d] if d < mesh.num_vertices else edge_normal[d]
        return dofs, normals

    @cached_property
    def support_h(self) -> np.ndarray:
        """Per-dof length scale: shortest adjacent mesh edge divided by the order."""
        h = np.full(self.num_dofs, np.inf)
        tri_h = self.mesh.edge_lengths[self.mesh.triangle_edges].min(axis=1) / self.order
        np.minimum.at(h, self.cell_dofs, tri_h[:, None])
        return h


def build_dof_map(mesh: Mesh, n: int, components: int = 1) -> FiniteElementSpace:
    if components not in (1, 2):
        raise InvalidArgumentError(f"components must be 1 or 2, got {components}")
    element = make_reference_element(n)
    numbering, coords = lattice_numbering(mesh, n)
    owners, local = mesh.boundary_owners
    along = np.array(edge_lattice_positions(n))
    edge_nodes = numbering[owners[:, None], along[local]] if len(owners) else np.zeros((0, n + 1), dtype=np.int64)
    by_tag = {}
    for tag in mesh.tags:
        by_tag[tag] = np.unique(edge_nodes[mesh.boundary_tags == tag])
    return FiniteElementSpace(mesh, element, components, numbering, coords, by_tag)


def periodic_x_map(space: FiniteElementSpace, x0: float = 0.0, x1: float = 1.0, tol: float = 1e-9) -> sp.csr_matrix:
    """Identification matrix P (N x N_reduced) tying dofs on x = x1 to their partners on x = x0.

    A full coefficient vector is P @ reduced; reduced test functions are P.T @ full.
    """
    x, y = space.dof_coords[:, 0], space.dof_coords[:, 1]
    left = np.flatnonzero(np.abs(x - x0) < tol)
    right = np.flatnonzero(np.abs(x - x1) < tol)
    partner = {round(float(y[i]) / tol): i for i in left}
    target = np.arange(space.num_dofs)
    for i in right:
        key = round(float(y[i]) / tol)
        if key not in partner:
            raise InvalidArgumentError(f"dof at ({x[i]:.6g}, {y[i]:.6g}) has no periodic partner")
        target[i] = partner[key]
    keep = np.setdiff1d(np.arange(space.num_dofs), right)
    reduced_index = np.full(space.num_dofs, -1)
    reduced_index[keep] = np.arange(len(keep))
    cols = reduced_index[target]
    P = sp.csr_matrix((np.ones(space.num_dofs), (np.arange(space.num_dofs), cols)), shape=(space.num_dofs, len(keep)))
    if space.components == 2:
        P = sp.block_diag([P, P], format="csr")
    return P
