"""
Zero-level contours of a sampled 2D field by marching squares.

Values are indexed [row, col] = [y index, x index]. Crossing points are
linearly interpolated along cell edges; segments are joined into polylines
through the edges they share.
"""

from collections import defaultdict
from typing import Dict, List, Tuple

import numpy as np

EdgeKey = Tuple[str, int, int]


def _crossing(x0, y0, v0, x1, y1, v1) -> Tuple[float, float]:
    w = v0 / (v0 - v1)
    return x0 + w * (x1 - x0), y0 + w * (y1 - y0)


def contour_segments(xs: np.ndarray, ys: np.ndarray, values: np.ndarray) -> Tuple[List[Tuple[EdgeKey, EdgeKey]], Dict[EdgeKey, Tuple[float, float]]]:
    """Zero-crossing segments per cell as pairs of edge keys, plus the crossing point of each edge.

    A value of exactly zero counts as positive. Cells with a NaN corner are skipped.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    v = np.asarray(values, dtype=float)
    if v.shape != (len(ys), len(xs)):
        raise ValueError(f"values shape {v.shape} does not match grid ({len(ys)}, {len(xs)})")
    pos = v >= 0
    points: Dict[EdgeKey, Tuple[float, float]] = {}

    def edge_point(key: EdgeKey):
        if key not in points:
            kind, j, i = key
            if kind == "h":
                points[key] = _crossing(xs[i], ys[j], v[j, i], xs[i + 1], ys[j], v[j, i + 1])
            else:
                points[key] = _crossing(xs[i], ys[j], v[j, i], xs[i], ys[j + 1], v[j + 1, i])
        return key

    segments = []
    ny, nx = v.shape
    for j in range(ny - 1):
        for i in range(nx - 1):
            corners = v[j:j + 2, i:i + 2]
            if np.isnan(corners).any():
                continue
            # corners in counter-clockwise order with the edge that follows each
            ring = [(pos[j, i], ("h", j, i)), (pos[j, i + 1], ("v", j, i + 1)), (pos[j + 1, i + 1], ("h", j + 1, i)), (pos[j + 1, i], ("v", j, i))]
            crossed = [edge for k, (p, edge) in enumerate(ring) if p != ring[(k + 1) % 4][0]]
            if len(crossed) == 2:
                segments.append((edge_point(crossed[0]), edge_point(crossed[1])))
            elif len(crossed) == 4:
                # saddle: the cell-centre average decides which corners connect
                centre_pos = corners.mean() >= 0
                e = [edge_point(edge) for edge in crossed]
                if centre_pos == pos[j, i]:
                    segments += [(e[0], e[1]), (e[2], e[3])]
                else:
                    segments += [(e[3], e[0]), (e[1], e[2])]
    return segments, points


def join_segments(segments: List[Tuple[EdgeKey, EdgeKey]], points: Dict[EdgeKey, Tuple[float, float]]) -> List[np.ndarray]:
    """Chain segments that share an edge into polylines; closed loops repeat their first point."""
    adjacency = defaultdict(list)
    for idx, (a, b) in enumerate(segments):
        adjacency[a].append(idx)
        adjacency[b].append(idx)
    used = np.zeros(len(segments), dtype=bool)

    def walk(start: EdgeKey, first_seg: int) -> List[EdgeKey]:
        chain = [start]
        seg, node = first_seg, start
        while seg is not None and not used[seg]:
            used[seg] = True
            a, b = segments[seg]
            node = b if a == node else a
            chain.append(node)
            seg = next((s for s in adjacency[node] if not used[s]), None)
        return chain

    polylines = []
    # open chains start at edges touched by a single segment
    starts = [key for key, segs in adjacency.items() if len(segs) == 1]
    for key in starts:
        seg = adjacency[key][0]
        if not used[seg]:
            polylines.append(walk(key, seg))
    for idx in range(len(segments)):
        if not used[idx]:
            polylines.append(walk(segments[idx][0], idx))
    return [np.array([points[k] for k in chain]) for chain in polylines]


def zero_contours(xs, ys, values) -> List[np.ndarray]:
    segments, points = contour_segments(xs, ys, values)
    return join_segments(segments, points)


def sign_change_cells(values: np.ndarray) -> np.ndarray:
    """(ny-1, nx-1) mask of cells whose corners straddle or touch zero."""
    v = np.asarray(values, dtype=float)
    corners = np.stack([v[:-1, :-1], v[:-1, 1:], v[1:, :-1], v[1:, 1:]])
    lo = corners.min(axis=0)
    hi = corners.max(axis=0)
    return ((lo < 0) & (hi > 0)) | ((corners == 0).any(axis=0))
