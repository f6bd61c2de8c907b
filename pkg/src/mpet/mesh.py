"""Triangular meshes with marked boundary edges.

Marker convention: ``1`` is the outer boundary (the whole boundary for the
unit square), ``2`` the inner ring of the annulus.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

OUTER = 1
INNER = 2

_MAGIC = "mpetmesh 1"


class MeshError(ValueError):
    pass


def signed_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p0 = vertices[triangles[:, 0]]
    p1 = vertices[triangles[:, 1]]
    p2 = vertices[triangles[:, 2]]
    d1 = p1 - p0
    d2 = p2 - p0
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangulation.

    ``triangles`` are counterclockwise vertex triples, ``boundary_edges``
    vertex pairs and ``boundary_markers`` one integer per boundary edge.
    The derived edge table numbers every edge once (sorted vertex pairs);
    ``cell_edges[t, e]`` is the global index of local edge ``e`` of cell
    ``t``, which joins local vertices ``e`` and ``(e + 1) % 3``.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_markers: np.ndarray
    edges: np.ndarray = field(init=False, repr=False)
    cell_edges: np.ndarray = field(init=False, repr=False)
    edge_markers: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float).reshape(-1, 2)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        be = np.ascontiguousarray(self.boundary_edges, dtype=np.int64).reshape(-1, 2)
        bm = np.ascontiguousarray(self.boundary_markers, dtype=np.int64).reshape(-1)
        if len(be) != len(bm):
            raise MeshError("every boundary edge needs exactly one marker")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise MeshError("triangle references a vertex index out of range")
        if be.size and (be.min() < 0 or be.max() >= len(v)):
            raise MeshError("boundary edge references a vertex index out of range")
        if np.any(signed_areas(v, t) <= 0.0):
            raise MeshError("triangles must have strictly positive signed area")

        local = np.array([[0, 1], [1, 2], [2, 0]])
        all_edges = np.sort(t[:, local].reshape(-1, 2), axis=1)
        edges, inverse, counts = np.unique(
            all_edges, axis=0, return_inverse=True, return_counts=True
        )
        inverse = inverse.reshape(-1)
        if np.any(counts > 2):
            raise MeshError("non-manifold edge shared by more than two triangles")

        boundary = edges[counts == 1]
        marked = np.sort(be, axis=1)
        order = np.lexsort((marked[:, 1], marked[:, 0]))
        marked_sorted = marked[order]
        if len(marked_sorted) != len(boundary) or not np.array_equal(
            marked_sorted, boundary
        ):
            raise MeshError("boundary edges do not tile the topological boundary")

        edge_markers = np.zeros(len(edges), dtype=np.int64)
        idx = _edge_lookup(edges, marked)
        edge_markers[idx] = bm

        for name, val in [
            ("vertices", v),
            ("triangles", t),
            ("boundary_edges", be),
            ("boundary_markers", bm),
            ("edges", edges),
            ("cell_edges", inverse.reshape(-1, 3)),
            ("edge_markers", edge_markers),
        ]:
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def areas(self) -> np.ndarray:
        return signed_areas(self.vertices, self.triangles)

    def area(self) -> float:
        return float(self.areas().sum())

    def markers(self) -> list[int]:
        return sorted(int(m) for m in np.unique(self.boundary_markers))

    def edge_incidence(self) -> np.ndarray:
        """Number of triangles touching each edge of ``self.edges``."""
        return np.bincount(self.cell_edges.reshape(-1), minlength=self.num_edges)

    def max_diameter(self) -> float:
        p = self.vertices[self.edges]
        return float(np.max(np.linalg.norm(p[:, 1] - p[:, 0], axis=1)))

    def __eq__(self, other):
        if not isinstance(other, Mesh):
            return NotImplemented
        return (
            np.array_equal(self.vertices, other.vertices)
            and np.array_equal(self.triangles, other.triangles)
            and np.array_equal(self.boundary_edges, other.boundary_edges)
            and np.array_equal(self.boundary_markers, other.boundary_markers)
        )

    __hash__ = None


def _edge_lookup(edges: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    """Row index in the sorted edge table for each sorted vertex pair."""
    n = int(max(edges.max(initial=0), pairs.max(initial=0))) + 1
    keys = edges[:, 0] * n + edges[:, 1]
    query = pairs[:, 0] * n + pairs[:, 1]
    idx = np.searchsorted(keys, query)
    if np.any(idx >= len(keys)) or np.any(keys[np.minimum(idx, len(keys) - 1)] != query):
        raise MeshError("edge not found in mesh")
    return idx


def unit_square_mesh(n: int) -> Mesh:
    """Structured mesh of [0,1]^2 with ``2 n^2`` triangles.

    Each cell is split along its bottom-left to top-right diagonal and the
    whole boundary carries marker 1.
    """
    if n < 1:
        raise MeshError("need at least one subdivision per side")
    s = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(s, s)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(n), np.arange(n))
    v00 = (j * (n + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + (n + 1)
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)

    k = np.arange(n)
    bottom = np.column_stack([k, k + 1])
    right = np.column_stack([k * (n + 1) + n, (k + 1) * (n + 1) + n])
    top = np.column_stack([n * (n + 1) + k + 1, n * (n + 1) + k])
    left = np.column_stack([(k + 1) * (n + 1), k * (n + 1)])
    boundary = np.vstack([bottom, right, top, left])
    return Mesh(vertices, triangles, boundary, np.full(len(boundary), OUTER))


def annulus_mesh(r_in: float, r_out: float, n_r: int, n_t: int) -> Mesh:
    """Polygonal annulus; inner ring edges get marker 2, outer ring marker 1."""
    if not (0.0 < r_in < r_out):
        raise MeshError("need 0 < r_in < r_out")
    if n_r < 1 or n_t < 3:
        raise MeshError("need n_r >= 1 and n_t >= 3")
    radii = np.linspace(r_in, r_out, n_r + 1)
    theta = 2.0 * np.pi * np.arange(n_t) / n_t
    R, T = np.meshgrid(radii, theta, indexing="ij")
    vertices = np.column_stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()])

    ring, k = np.meshgrid(np.arange(n_r), np.arange(n_t), indexing="ij")
    a = (ring * n_t + k).ravel()
    b = (ring * n_t + (k + 1) % n_t).ravel()
    c = b + n_t
    d = a + n_t
    triangles = np.stack(
        [np.column_stack([a, c, b]), np.column_stack([a, d, c])], axis=1
    ).reshape(-1, 3)

    k = np.arange(n_t)
    inner = np.column_stack([(k + 1) % n_t, k])
    outer = np.column_stack([n_r * n_t + k, n_r * n_t + (k + 1) % n_t])
    boundary = np.vstack([outer, inner])
    markers = np.concatenate([np.full(n_t, OUTER), np.full(n_t, INNER)])
    return Mesh(vertices, triangles, boundary, markers)


def write_mesh(mesh: Mesh, path) -> None:
    lines = [
        _MAGIC,
        f"{mesh.num_vertices} {mesh.num_triangles} {len(mesh.boundary_edges)}",
    ]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines += [f"{a} {b} {c}" for a, b, c in mesh.triangles]
    lines += [
        f"{a} {b} {m}" for (a, b), m in zip(mesh.boundary_edges, mesh.boundary_markers)
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> Mesh:
    """Read the plain-text mesh format; clockwise triangles are reoriented."""
    rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not rows or " ".join(rows[0]) != _MAGIC:
        raise MeshError(f"{path}: missing '{_MAGIC}' header")
    try:
        nv, nt, nb = (int(s) for s in rows[1])
    except (IndexError, ValueError) as exc:
        raise MeshError(f"{path}: malformed count line") from exc
    if min(nv, nt, nb) < 0 or len(rows) != 2 + nv + nt + nb:
        raise MeshError(f"{path}: counts do not match the number of lines")
    try:
        vertices = np.array(rows[2 : 2 + nv], dtype=float).reshape(nv, 2)
        triangles = np.array(rows[2 + nv : 2 + nv + nt], dtype=np.int64).reshape(nt, 3)
        bnd = np.array(rows[2 + nv + nt :], dtype=np.int64).reshape(nb, 3)
    except ValueError as exc:
        raise MeshError(f"{path}: malformed entry") from exc
    if triangles.size and (triangles.min() < 0 or triangles.max() >= nv):
        raise MeshError(f"{path}: triangle vertex index out of range")
    areas = signed_areas(vertices, triangles)
    if np.any(areas == 0.0):
        raise MeshError(f"{path}: degenerate triangle")
    flip = areas < 0
    triangles[flip] = triangles[flip][:, [0, 2, 1]]
    return Mesh(vertices, triangles, bnd[:, :2], bnd[:, 2])
