"""
Planar triangulations with tagged boundary edges.
Builds the structured square meshes, uniform refinement, node normals, point
location and the text format used for the bundled cylinder-channel mesh.
"""

import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Tuple

import numpy as np

from errors import InvalidArgumentError, MalformedBoundaryError, MalformedMeshError, PointLocationError

DATA_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "data")
CYLINDER_MESH_PATH = os.path.join(DATA_DIR, "cylinder_g1.mesh")

# Square sides
BOTTOM, RIGHT, TOP, LEFT = 1, 2, 3, 4
# Channel boundaries
INFLOW, OUTFLOW, WALL, CYLINDER = 1, 2, 3, 4

SQUARE_TAGS = {"bottom": BOTTOM, "right": RIGHT, "top": TOP, "left": LEFT}
CHANNEL_TAGS = {"inflow": INFLOW, "outflow": OUTFLOW, "walls": WALL, "cylinder": CYLINDER}

CHANNEL_LENGTH = 2.2
CHANNEL_HEIGHT = 0.41
CYLINDER_CENTER = (0.2, 0.2)
CYLINDER_RADIUS = 0.05


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangulation with counterclockwise triangles and tagged boundary edges.

    Boundary edges are stored oriented the same way as in their owning
    triangle, so the outward normal of edge (a, b) is the tangent b - a turned
    clockwise.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray
    node_normals: Dict[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        vertices = np.ascontiguousarray(self.vertices, dtype=float).reshape(-1, 2)
        triangles = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        edges = np.ascontiguousarray(self.boundary_edges, dtype=np.int64).reshape(-1, 2)
        tags = np.ascontiguousarray(self.boundary_tags, dtype=np.int64).reshape(-1)
        if len(tags) != len(edges):
            raise MalformedMeshError(f"{len(edges)} boundary edges but {len(tags)} tags")
        nv = len(vertices)
        for name, arr in (("triangle", triangles), ("boundary edge", edges)):
            if arr.size and (arr.min() < 0 or arr.max() >= nv):
                raise MalformedMeshError(f"{name} references a vertex index outside 0..{nv - 1}")

        # orient boundary edges like their owners
        owners, local = _edge_owners(triangles, edges)
        if np.any(owners < 0):
            bad = edges[np.argmax(owners < 0)]
            raise MalformedMeshError(f"boundary edge ({bad[0]}, {bad[1]}) is not an edge of any triangle")
        first = triangles[owners, local]
        flip = first != edges[:, 0]
        edges = np.where(flip[:, None], edges[:, ::-1], edges)

        normals = {int(k): np.asarray(v, dtype=float).reshape(2) for k, v in dict(self.node_normals).items()}
        for arr in (vertices, triangles, edges, tags):
            arr.setflags(write=False)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "triangles", triangles)
        object.__setattr__(self, "boundary_edges", edges)
        object.__setattr__(self, "boundary_tags", tags)
        object.__setattr__(self, "node_normals", normals)

    def __eq__(self, other):
        if not isinstance(other, Mesh):
            return NotImplemented
        if sorted(self.node_normals) != sorted(other.node_normals):
            return False
        return (
            np.array_equal(self.vertices, other.vertices)
            and np.array_equal(self.triangles, other.triangles)
            and np.array_equal(self.boundary_edges, other.boundary_edges)
            and np.array_equal(self.boundary_tags, other.boundary_tags)
            and all(np.allclose(self.node_normals[k], other.node_normals[k], rtol=0, atol=1e-14) for k in self.node_normals)
        )

    __hash__ = object.__hash__

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def _edge_table(self) -> Tuple[np.ndarray, np.ndarray]:
        local = self.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
        keys = np.sort(local, axis=1)
        edges, inverse = np.unique(keys, axis=0, return_inverse=True)
        return edges, inverse.reshape(-1, 3)

    @property
    def edges(self) -> np.ndarray:
        """Unique edges as (E, 2) with the smaller vertex first."""
        return self._edge_table[0]

    @property
    def triangle_edges(self) -> np.ndarray:
        """Edge id of local edge k = (v_k, v_k+1) for every triangle."""
        return self._edge_table[1]

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        e = self.edges
        return np.linalg.norm(self.vertices[e[:, 1]] - self.vertices[e[:, 0]], axis=1)

    @property
    def h_min(self) -> float:
        return float(self.edge_lengths.min())

    @property
    def h_max(self) -> float:
        return float(self.edge_lengths.max())

    @cached_property
    def signed_areas(self) -> np.ndarray:
        a, b, c = (self.vertices[self.triangles[:, k]] for k in range(3))
        return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1]))

    @cached_property
    def boundary_owners(self) -> Tuple[np.ndarray, np.ndarray]:
        """(triangle index, local edge index) owning each boundary edge."""
        return _edge_owners(self.triangles, self.boundary_edges)

    @cached_property
    def boundary_edge_normals(self) -> np.ndarray:
        t = self.vertices[self.boundary_edges[:, 1]] - self.vertices[self.boundary_edges[:, 0]]
        n = np.column_stack([t[:, 1], -t[:, 0]])
        return n / np.linalg.norm(n, axis=1)[:, None]

    @cached_property
    def boundary_edge_lengths(self) -> np.ndarray:
        t = self.vertices[self.boundary_edges[:, 1]] - self.vertices[self.boundary_edges[:, 0]]
        return np.linalg.norm(t, axis=1)

    @property
    def tags(self) -> List[int]:
        return sorted(set(int(t) for t in self.boundary_tags))

    def boundary_vertices(self, tags=None) -> np.ndarray:
        edges = self.boundary_edges if tags is None else self.boundary_edges[np.isin(self.boundary_tags, list(tags))]
        return np.unique(edges)

    @property
    def euler_characteristic(self) -> int:
        return self.num_vertices - self.num_edges + self.num_triangles

    def validate(self) -> "Mesh":
        """Raise MalformedMeshError when an invariant fails; returns self."""
        if self.num_triangles == 0:
            raise MalformedMeshError("mesh has no triangles")
        areas = self.signed_areas
        if np.any(areas <= 0):
            k = int(np.argmin(areas))
            raise MalformedMeshError(f"triangle {k} has non-positive signed area {areas[k]:.3e}")
        counts = np.bincount(self.triangle_edges.ravel(), minlength=self.num_edges)
        if np.any(counts > 2):
            raise MalformedMeshError("an edge is shared by more than two triangles")
        open_edges = {tuple(e) for e in self.edges[counts == 1]}
        tagged = {tuple(sorted(e)) for e in self.boundary_edges.tolist()}
        if len(tagged) != len(self.boundary_edges):
            raise MalformedMeshError("duplicate boundary edge")
        if open_edges != tagged:
            raise MalformedMeshError(
                f"{len(open_edges - tagged)} untagged boundary edges, {len(tagged - open_edges)} tagged interior edges"
            )
        degree = np.bincount(self.boundary_edges.ravel(), minlength=self.num_vertices)
        if np.any((degree != 0) & (degree != 2)):
            raise MalformedBoundaryError("boundary edges do not form closed loops")
        for k, nrm in self.node_normals.items():
            if abs(np.linalg.norm(nrm) - 1.0) > 1e-12:
                raise MalformedMeshError(f"node normal at vertex {k} is not unit length")
        return self

    def locate(self, points, tol: float = 1e-12) -> Tuple[np.ndarray, np.ndarray]:
        """Containing triangle and barycentric coordinates for each point.

        Points on shared edges go to the lowest-numbered triangle.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        a = self.vertices[self.triangles[:, 0]]
        b = self.vertices[self.triangles[:, 1]]
        c = self.vertices[self.triangles[:, 2]]
        det = 2.0 * self.signed_areas
        found = np.empty(len(pts), dtype=np.int64)
        bary = np.empty((len(pts), 3))
        for i, p in enumerate(pts):
            l1 = ((p[0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (c[:, 0] - a[:, 0]) * (p[1] - a[:, 1])) / det
            l2 = ((b[:, 0] - a[:, 0]) * (p[1] - a[:, 1]) - (p[0] - a[:, 0]) * (b[:, 1] - a[:, 1])) / det
            l0 = 1.0 - l1 - l2
            inside = np.flatnonzero((l0 >= -tol) & (l1 >= -tol) & (l2 >= -tol))
            if len(inside) == 0:
                raise PointLocationError(p)
            k = inside[0]
            found[i] = k
            bary[i] = (l0[k], l1[k], l2[k])
        return found, bary

    def with_normals(self, normals: Dict[int, np.ndarray]) -> "Mesh":
        return Mesh(self.vertices, self.triangles, self.boundary_edges, self.boundary_tags, normals)


def _edge_owners(triangles: np.ndarray, edges: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    owners = np.full(len(edges), -1, dtype=np.int64)
    local = np.zeros(len(edges), dtype=np.int64)
    if len(edges) == 0:
        return owners, local
    lookup = {}
    for t, tri in enumerate(triangles.tolist()):
        for k in range(3):
            key = (min(tri[k], tri[(k + 1) % 3]), max(tri[k], tri[(k + 1) % 3]))
            lookup.setdefault(key, (t, k))
    for i, (a, b) in enumerate(edges.tolist()):
        hit = lookup.get((min(a, b), max(a, b)))
        if hit is not None:
            owners[i], local[i] = hit
    return owners, local


def average_edge_normals(mesh: Mesh, edge_mask: Optional[np.ndarray] = None, require_pair: bool = True) -> Dict[int, np.ndarray]:
    """Unit normals at boundary vertices averaged from the adjacent (masked) edges.

    A vertex sits between two boundary edges, so both incident angles are the
    same and the angle weights are equal.
    """
    if edge_mask is None:
        edge_mask = np.ones(len(mesh.boundary_edges), dtype=bool)
    edges = mesh.boundary_edges[edge_mask]
    normals = mesh.boundary_edge_normals[edge_mask]
    acc = np.zeros((mesh.num_vertices, 2))
    count = np.zeros(mesh.num_vertices, dtype=np.int64)
    for k in (0, 1):
        np.add.at(acc, edges[:, k], normals)
        np.add.at(count, edges[:, k], 1)
    out = {}
    for v in np.flatnonzero(count):
        if require_pair and count[v] != 2:
            raise MalformedBoundaryError(f"boundary vertex {v} has {count[v]} adjacent boundary edges, expected 2")
        length = np.linalg.norm(acc[v])
        if length < 1e-14:
            raise MalformedBoundaryError(f"adjacent edge normals cancel at boundary vertex {v}")
        out[int(v)] = acc[v] / length
    return out


def compute_node_normals(mesh: Mesh) -> Mesh:
    return mesh.with_normals(average_edge_normals(mesh))


# Lattice numbering shared by uniform refinement and the P_n dof layout.

def lattice_triples(n: int) -> np.ndarray:
    """Integer barycentric triples (a0, a1, a2), a0+a1+a2 = n, in canonical order:
    vertices, then the nodes of edges (v0,v1), (v1,v2), (v2,v0) walking from the
    first vertex, then interior nodes.
    """
    if n == 0:
        return np.array([[0, 0, 0]])
    out = [(n, 0, 0), (0, n, 0), (0, 0, n)]
    out += [(n - i, i, 0) for i in range(1, n)]
    out += [(0, n - i, i) for i in range(1, n)]
    out += [(i, 0, n - i) for i in range(1, n)]
    for a2 in range(1, n):
        for a1 in range(1, n - a2):
            out.append((n - a1 - a2, a1, a2))
    return np.array(out, dtype=np.int64)


def lattice_numbering(mesh: Mesh, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Global node index of every local lattice node and the node coordinates.

    Vertices keep their indices, edge nodes follow (n-1 per edge, ordered from
    the smaller vertex), then interior nodes triangle by triangle.
    """
    triples = lattice_triples(n)
    nloc = len(triples)
    nv, ne, nt = mesh.num_vertices, mesh.num_edges, mesh.num_triangles
    n_edge_nodes = n - 1
    n_int = (n - 1) * (n - 2) // 2
    tri = mesh.triangles
    tedges = mesh.triangle_edges

    numbering = np.empty((nt, nloc), dtype=np.int64)
    numbering[:, :3] = tri
    col = 3
    for k in range(3):
        start, end = tri[:, k], tri[:, (k + 1) % 3]
        forward = start < end
        for i in range(1, n):
            pos = np.where(forward, i, n - i)
            numbering[:, col] = nv + tedges[:, k] * n_edge_nodes + (pos - 1)
            col += 1
    base = nv + ne * n_edge_nodes
    for j in range(n_int):
        numbering[:, col + j] = base + np.arange(nt) * n_int + j

    total = base + nt * n_int
    coords = np.empty((total, 2))
    coords[:nv] = mesh.vertices
    if n_edge_nodes:
        e = mesh.edges
        p0, p1 = mesh.vertices[e[:, 0]], mesh.vertices[e[:, 1]]
        for i in range(1, n):
            coords[nv + np.arange(ne) * n_edge_nodes + (i - 1)] = p0 + (i / n) * (p1 - p0)
    if n_int:
        verts = mesh.vertices[tri]
        lam = triples[3 * n:] / n
        pts = np.einsum("jk,tkd->tjd", lam, verts)
        coords[base:] = pts.reshape(-1, 2)
    return numbering, coords


def _sub_triangles(n: int) -> np.ndarray:
    """Local lattice indices of the n^2 subtriangles, counterclockwise."""
    triples = lattice_triples(n)
    index = {tuple(t): i for i, t in enumerate(triples.tolist())}

    def at(i, j):
        return index[(n - i - j, i, j)]

    subs = []
    for j in range(n):
        for i in range(n - j):
            subs.append((at(i, j), at(i + 1, j), at(i, j + 1)))
            if i + j <= n - 2:
                subs.append((at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)))
    return np.array(subs, dtype=np.int64)


def edge_lattice_positions(n: int) -> List[List[int]]:
    """Local lattice indices along each local edge k, from v_k to v_k+1."""
    out = []
    for k in range(3):
        inner = list(range(3 + k * (n - 1), 3 + (k + 1) * (n - 1)))
        out.append([k] + inner + [(k + 1) % 3])
    return out


def refine_uniform(mesh: Mesh, n: int) -> Mesh:
    """Split every edge into n segments; each triangle becomes n^2 similar ones.

    New boundary nodes stay on the straight boundary edges.
    """
    if n < 1:
        raise InvalidArgumentError(f"split factor must be >= 1, got {n}")
    if n == 1:
        return mesh
    numbering, coords = lattice_numbering(mesh, n)
    subs = _sub_triangles(n)
    triangles = numbering[:, subs].reshape(-1, 3)

    owners, local = mesh.boundary_owners
    along = np.array(edge_lattice_positions(n))
    nodes = numbering[owners[:, None], along[local]]
    edges = np.stack([nodes[:, :-1], nodes[:, 1:]], axis=2).reshape(-1, 2)
    tags = np.repeat(mesh.boundary_tags, n)
    refined = Mesh(coords, triangles, edges, tags)
    return compute_node_normals(refined) if mesh.node_normals else refined


def _structured_square(coords_1d: np.ndarray) -> Mesh:
    m = len(coords_1d) - 1
    xs, ys = np.meshgrid(coords_1d, coords_1d)
    vertices = np.column_stack([xs.ravel(), ys.ravel()])

    def vid(i, j):
        return j * (m + 1) + i

    i, j = np.meshgrid(np.arange(m), np.arange(m))
    i, j = i.ravel(), j.ravel()
    v00, v10, v01, v11 = vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.empty((2 * m * m, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    k = np.arange(m)
    bottom = np.column_stack([vid(k, 0), vid(k + 1, 0)])
    right = np.column_stack([vid(m, k), vid(m, k + 1)])
    top = np.column_stack([vid(k + 1, m), vid(k, m)])[::-1]
    left = np.column_stack([vid(0, k + 1), vid(0, k)])[::-1]
    edges = np.vstack([bottom, right, top, left])
    tags = np.repeat([BOTTOM, RIGHT, TOP, LEFT], m)
    return compute_node_normals(Mesh(vertices, triangles, edges, tags))


def gen_unit_square(m: int) -> Mesh:
    if m < 1:
        raise InvalidArgumentError(f"cells per side must be >= 1, got {m}")
    return _structured_square(np.arange(m + 1) / m)


def stretch_map(xi, beta: float):
    return xi - beta * np.sin(2.0 * np.pi * xi) / (2.0 * np.pi)


def stretch_for_ratio(ratio: float) -> float:
    """Stretching strength whose center/boundary spacing ratio is `ratio`."""
    if ratio < 1:
        raise InvalidArgumentError(f"spacing ratio must be >= 1, got {ratio}")
    return (ratio - 1.0) / (ratio + 1.0)


def gen_stretched_square(m: int, beta: float) -> Mesh:
    """Unit square with lattice lines clustered towards the walls."""
    if m < 2:
        raise InvalidArgumentError(f"cells per side must be >= 2, got {m}")
    if not 0.0 <= beta < 1.0:
        raise InvalidArgumentError(f"stretching strength must lie in [0, 1), got {beta}")
    xi = np.arange(m + 1) / m
    s = stretch_map(xi, beta)
    s[0], s[-1] = 0.0, 1.0
    return _structured_square(s)


def save_mesh(mesh: Mesh, path: str, comments: Optional[List[str]] = None) -> None:
    lines = [f"# {c}" for c in (comments or [])]
    lines.append("mesh 2d triangle")
    lines.append(f"vertices {mesh.num_vertices}")
    lines.extend(f"{x!r} {y!r}" for x, y in mesh.vertices.tolist())
    lines.append(f"triangles {mesh.num_triangles}")
    lines.extend(f"{a} {b} {c}" for a, b, c in mesh.triangles.tolist())
    lines.append(f"boundary_edges {len(mesh.boundary_edges)}")
    lines.extend(f"{a} {b} {t}" for (a, b), t in zip(mesh.boundary_edges.tolist(), mesh.boundary_tags.tolist()))
    try:
        with open(path, "w", encoding="utf-8") as f:
            f.write("\n".join(lines) + "\n")
    except OSError as e:
        raise OSError(f"Cannot write mesh file {path}: {e}") from e


def _read_section(rows, pos, name, width, cast):
    if pos >= len(rows):
        raise MalformedMeshError(f"missing '{name}' section")
    lineno, parts = rows[pos]
    if len(parts) != 2 or parts[0] != name:
        raise MalformedMeshError(f"expected '{name} <count>'", lineno)
    try:
        count = int(parts[1])
    except ValueError:
        raise MalformedMeshError(f"bad count '{parts[1]}'", lineno)
    if count < 0:
        raise MalformedMeshError(f"negative count {count}", lineno)
    out = []
    for k in range(count):
        if pos + 1 + k >= len(rows):
            raise MalformedMeshError(f"'{name}' section ends after {k} of {count} entries")
        lineno, parts = rows[pos + 1 + k]
        if len(parts) != width:
            raise MalformedMeshError(f"expected {width} values in '{name}' entry", lineno)
        try:
            out.append([cast(p) for p in parts])
        except ValueError:
            raise MalformedMeshError(f"unparsable '{name}' entry: {' '.join(parts)}", lineno)
    return out, pos + 1 + count


def load_mesh(path: str) -> Mesh:
    """Parse the line-oriented mesh format; node normals are recomputed."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise OSError(f"Cannot read mesh file {path}: {e}") from e
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append((lineno, line.split()))
    if not rows or rows[0][1] != ["mesh", "2d", "triangle"]:
        raise MalformedMeshError("expected header 'mesh 2d triangle'", rows[0][0] if rows else 1)
    verts, pos = _read_section(rows, 1, "vertices", 2, float)
    tris, pos = _read_section(rows, pos, "triangles", 3, int)
    bnd, pos = _read_section(rows, pos, "boundary_edges", 3, int)
    if pos != len(rows):
        raise MalformedMeshError("unexpected content after boundary_edges", rows[pos][0])
    bnd = np.array(bnd, dtype=np.int64).reshape(-1, 3)
    mesh = Mesh(np.array(verts).reshape(-1, 2), np.array(tris).reshape(-1, 3), bnd[:, :2], bnd[:, 2])
    return compute_node_normals(mesh.validate())


def gen_cylinder_channel() -> Mesh:
    """Channel [0, 2.2] x [0, 0.41] minus the polygonal cylinder, from the bundled file."""
    return load_mesh(CYLINDER_MESH_PATH)


def mesh_info(mesh: Mesh) -> Dict[str, object]:
    counts = {int(t): int(np.sum(mesh.boundary_tags == t)) for t in mesh.tags}
    return {
        "vertices": mesh.num_vertices,
        "triangles": mesh.num_triangles,
        "edges": mesh.num_edges,
        "boundary_edges": len(mesh.boundary_edges),
        "edges_per_tag": counts,
        "h_min": mesh.h_min,
        "h_max": mesh.h_max,
        "area": float(mesh.signed_areas.sum()),
        "euler_characteristic": mesh.euler_characteristic,
    }
