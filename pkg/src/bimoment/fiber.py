"""Approximate fiber-surface extraction.

A control polygon selects a region of range space; the preimage of its
boundary is approximated by evaluating the polygon's signed distance at
every grid vertex's bivariate value and running marching tetrahedra on
the zero level over the Freudenthal decomposition. Output vertices carry
interpolated world positions and bivariate values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grids import BivariateField, RangeWindow
from .tetra import cell_tets, iter_slab_chunks

SIMPLE_EPS = 1e-12
DEGENERATE_AREA = 1e-14

# tet edge order used throughout: pairs of local tet vertices
_EDGE_VERTS = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))

# marching-tetrahedra triangle table keyed by the inside-vertex bitmask;
# entries are local edge ids; 2-2 splits keep the quad ring order so the
# two triangles share a diagonal
_CASES = {
    1: ((0, 1, 2),),
    2: ((0, 3, 4),),
    4: ((1, 3, 5),),
    8: ((2, 4, 5),),
    14: ((0, 2, 1),),
    13: ((0, 4, 3),),
    11: ((1, 5, 3),),
    7: ((2, 5, 4),),
    3: ((1, 2, 4), (1, 4, 3)),
    12: ((1, 3, 4), (1, 4, 2)),
    5: ((0, 2, 5), (0, 5, 3)),
    10: ((0, 3, 5), (0, 5, 2)),
    6: ((0, 4, 5), (0, 5, 1)),
    9: ((0, 1, 5), (0, 5, 4)),
}


def _segment_point_distance(px, py, ax, ay, bx, by):
    dx = bx - ax
    dy = by - ay
    L2 = dx * dx + dy * dy
    if L2 == 0.0:
        return np.hypot(px - ax, py - ay)
    t = np.clip(((px - ax) * dx + (py - ay) * dy) / L2, 0.0, 1.0)
    return np.hypot(px - (ax + t * dx), py - (ay + t * dy))


def _cross2(u, v) -> float:
    return float(u[0] * v[1] - u[1] * v[0])


def _segment_segment_distance(a0, a1, b0, b1):
    # proper crossing has distance 0; otherwise the minimum is attained at
    # an endpoint against the other segment
    d1 = _cross2(a1 - a0, b0 - a0)
    d2 = _cross2(a1 - a0, b1 - a0)
    d3 = _cross2(b1 - b0, a0 - b0)
    d4 = _cross2(b1 - b0, a1 - b0)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 != d2 and d3 != d4:
        return 0.0
    return min(
        float(_segment_point_distance(b0[0], b0[1], a0[0], a0[1], a1[0], a1[1])),
        float(_segment_point_distance(b1[0], b1[1], a0[0], a0[1], a1[0], a1[1])),
        float(_segment_point_distance(a0[0], a0[1], b0[0], b0[1], b1[0], b1[1])),
        float(_segment_point_distance(a1[0], a1[1], b0[0], b0[1], b1[0], b1[1])),
    )


@dataclass(frozen=True)
class ControlPolygon:
    """Closed simple polygon in range space.

    Simplicity is checked in window-normalized coordinates when a window
    is supplied, otherwise against the polygon's own extent, with
    tolerance SIMPLE_EPS. Only closed polygons are supported.
    """

    vertices: np.ndarray
    closed: bool = True
    window: RangeWindow | None = None

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise ValueError(f"polygon needs >= 3 range-space points, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("polygon vertices must be finite")
        if not self.closed:
            raise ValueError("open control polygons are not supported")
        if self.window is not None:
            nv = np.column_stack(self.window.normalize(v[:, 0], v[:, 1]))
        else:
            span = max(float(np.ptp(v[:, 0])), float(np.ptp(v[:, 1])), 1.0)
            nv = v / span
        self._check_simple(nv)
        v = np.ascontiguousarray(v)
        v.flags.writeable = False
        object.__setattr__(self, "vertices", v)

    @staticmethod
    def _check_simple(nv: np.ndarray) -> None:
        n = nv.shape[0]
        edges = [(nv[i], nv[(i + 1) % n]) for i in range(n)]
        for i, (a0, a1) in enumerate(edges):
            if np.hypot(*(a1 - a0)) <= SIMPLE_EPS:
                raise ValueError(f"polygon edge {i} has zero length")
        for i in range(n):
            a0, a1 = edges[i]
            nxt = (i + 1) % n
            # adjacent spike: next edge folding back along this one
            b1 = edges[nxt][1]
            if (
                abs(_cross2(a1 - a0, b1 - a1)) <= SIMPLE_EPS
                and np.dot(a1 - a0, b1 - a1) < 0
            ):
                raise ValueError(f"polygon folds back on itself at vertex {nxt}")
            for j in range(i + 1, n):
                if j == nxt or (i == 0 and j == n - 1):
                    continue
                if _segment_segment_distance(a0, a1, *edges[j]) <= SIMPLE_EPS:
                    raise ValueError(
                        f"polygon is not simple: edges {i} and {j} intersect"
                    )

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]


def polygon_signed_distance(p, poly: ControlPolygon):
    """Euclidean distance to the polygon boundary, negative inside.

    Inside-ness follows the even-odd rule; boundary points report 0.
    Accepts a single (2,) point or an (n, 2) batch.
    """
    pts = np.asarray(p, dtype=np.float64)
    single = pts.ndim == 1
    pts = pts.reshape(-1, 2)
    px = pts[:, 0]
    py = pts[:, 1]
    v = poly.vertices
    n = v.shape[0]
    dist = np.full(px.shape, np.inf)
    inside = np.zeros(px.shape, dtype=bool)
    for i in range(n):
        ax, ay = v[i]
        bx, by = v[(i + 1) % n]
        dist = np.minimum(dist, _segment_point_distance(px, py, ax, ay, bx, by))
        crosses = (ay > py) != (by > py)
        if np.any(crosses):
            xint = ax + (py - ay) * (bx - ax) / (by - ay)
            inside ^= crosses & (px < xint)
    out = np.where(inside, -dist, dist)
    return float(out[0]) if single else out


@dataclass(frozen=True)
class TriangleMesh:
    """Triangle soup with world positions and per-vertex (f1, f2) values."""

    vertices: np.ndarray  # (n, 3)
    values: np.ndarray  # (n, 2)
    triangles: np.ndarray  # (m, 3) int64

    def __post_init__(self):
        verts = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3))
        vals = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64).reshape(-1, 2))
        tris = np.ascontiguousarray(np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3))
        if vals.shape[0] != verts.shape[0]:
            raise ValueError("values must pair one (f1, f2) with each vertex")
        if tris.size and (tris.min() < 0 or tris.max() >= verts.shape[0]):
            raise ValueError("triangle indices out of range")
        if tris.size:
            p = verts[tris]
            area = 0.5 * np.linalg.norm(
                np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1
            )
            if np.any(area <= DEGENERATE_AREA):
                raise ValueError("mesh contains degenerate triangles")
        for arr in (verts, vals, tris):
            arr.flags.writeable = False
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "triangles", tris)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]


def _empty_mesh() -> TriangleMesh:
    return TriangleMesh(
        np.empty((0, 3)), np.empty((0, 2)), np.empty((0, 3), dtype=np.int64)
    )


def extract_fiber_surface(field: BivariateField, poly: ControlPolygon) -> TriangleMesh:
    """Marching tetrahedra on the zero level of the polygon distance field.

    The sign at each grid vertex comes from polygon_signed_distance of its
    (f1, f2) value; crossings are interpolated once per global grid edge
    (canonical low-high vertex order), which makes the mesh watertight
    across shared tetrahedron faces. Vertices with s exactly 0 count as
    outside, so a field grazing the polygon boundary emits no sliver
    geometry. No sign change anywhere yields an empty mesh.
    """
    spec = field.spec
    s = polygon_signed_distance(
        np.column_stack([field.f1.values, field.f2.values]), poly
    )
    if not np.any(s < 0.0) or not np.any(s >= 0.0):
        return _empty_mesh()

    corner_pairs = []  # (n_tris, 3, 2) global vertex pairs per chunk
    for z0, z1 in iter_slab_chunks(spec):
        idx = cell_tets(spec.dims, z0, z1)
        inside = s[idx] < 0.0
        mask = (
            inside[:, 0].astype(np.int8)
            + 2 * inside[:, 1]
            + 4 * inside[:, 2]
            + 8 * inside[:, 3]
        )
        for m in np.unique(mask):
            if m == 0 or m == 15:
                continue
            rows = idx[mask == m]
            for tri in _CASES[int(m)]:
                corners = np.empty((rows.shape[0], 3, 2), dtype=np.int64)
                for c, e in enumerate(tri):
                    va, vb = _EDGE_VERTS[e]
                    corners[:, c, 0] = rows[:, va]
                    corners[:, c, 1] = rows[:, vb]
                corner_pairs.append(corners)

    if not corner_pairs:
        return _empty_mesh()
    corners = np.concatenate(corner_pairs)
    lo = corners.min(axis=2)
    hi = corners.max(axis=2)
    nvert = spec.n_vertices
    keys = lo * np.int64(nvert) + hi
    uniq, tri_idx = np.unique(keys, return_inverse=True)
    tris = tri_idx.reshape(-1, 3)

    ulo = uniq // nvert
    uhi = uniq % nvert
    t = s[ulo] / (s[ulo] - s[uhi])
    t = t[:, None]
    pos = spec.vertex_coords(ulo) * (1.0 - t) + spec.vertex_coords(uhi) * t
    f1 = field.f1.values
    f2 = field.f2.values
    vals = np.column_stack(
        [
            f1[ulo] * (1.0 - t[:, 0]) + f1[uhi] * t[:, 0],
            f2[ulo] * (1.0 - t[:, 0]) + f2[uhi] * t[:, 0],
        ]
    )

    p = pos[tris]
    area = 0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)
    tris = tris[area > DEGENERATE_AREA]

    used = np.unique(tris)
    remap = np.full(uniq.shape[0], -1, dtype=np.int64)
    remap[used] = np.arange(used.shape[0])
    return TriangleMesh(pos[used], vals[used], remap[tris])


# ---------------------------------------------------------------------------
# mesh persistence


def export_mesh(mesh: TriangleMesh, path, fmt: str) -> Path:
    """Write OBJ (positions only) or JSON (positions, values, triangles)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        if fmt == "obj":
            lines = []
            for x, y, z in mesh.vertices:
                lines.append(f"v {x:.17g} {y:.17g} {z:.17g}")
            for a, b, c in mesh.triangles:
                lines.append(f"f {a + 1} {b + 1} {c + 1}")
            path.write_text("".join(line + "\n" for line in lines))
        elif fmt == "json":
            with open(path, "w") as fh:
                json.dump(mesh_to_json_dict(mesh), fh, sort_keys=True, indent=2)
                fh.write("\n")
        else:
            raise ValueError(f"unknown mesh format {fmt!r}, expected 'obj' or 'json'")
    except OSError as exc:
        raise OSError(f"failed writing mesh to {path}: {exc}") from exc
    return path


def mesh_to_json_dict(mesh: TriangleMesh) -> dict:
    return {
        "vertices": mesh.vertices.tolist(),
        "values": mesh.values.tolist(),
        "triangles": mesh.triangles.tolist(),
    }


def load_mesh_json(path) -> TriangleMesh:
    with open(path) as fh:
        doc = json.load(fh)
    return TriangleMesh(
        np.asarray(doc["vertices"], dtype=np.float64).reshape(-1, 3),
        np.asarray(doc["values"], dtype=np.float64).reshape(-1, 2),
        np.asarray(doc["triangles"], dtype=np.int64).reshape(-1, 3),
    )
