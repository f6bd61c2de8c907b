"""Lagrange elements of degree 1-3 on triangles.

Reference triangle: vertices (0,0), (1,0), (0,1). Local node order is the
three vertices, then the nodes of edges (0,1), (1,2), (2,0) running from the
first to the second endpoint, then the interior node (degree 3 only).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .mesh import Mesh

SUPPORTED_DEGREES = (1, 2, 3)
MAX_QUADRATURE_ORDER = 8

_LOCAL_EDGES = ((0, 1), (1, 2), (2, 0))
_BARY_GRADS = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


def num_local_nodes(degree: int) -> int:
    return (degree + 1) * (degree + 2) // 2


def reference_nodes(degree: int) -> np.ndarray:
    _check_degree(degree)
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    nodes = list(verts)
    for a, b in _LOCAL_EDGES:
        for m in range(1, degree):
            s = m / degree
            nodes.append((1 - s) * verts[a] + s * verts[b])
    if degree == 3:
        nodes.append(np.array([1.0, 1.0]) / 3.0)
    return np.array(nodes)


def _check_degree(degree):
    if degree not in SUPPORTED_DEGREES:
        raise ValueError(f"unsupported Lagrange degree {degree}")


def lagrange_basis(degree: int, ref_points) -> tuple[np.ndarray, np.ndarray]:
    """Values ``(npts, nloc)`` and reference gradients ``(npts, nloc, 2)``."""
    _check_degree(degree)
    pts = np.atleast_2d(np.asarray(ref_points, dtype=float))
    x, y = pts[:, 0], pts[:, 1]
    lam = np.stack([1.0 - x - y, x, y], axis=1)
    G = _BARY_GRADS
    n = len(pts)
    nloc = num_local_nodes(degree)
    vals = np.empty((n, nloc))
    grads = np.empty((n, nloc, 2))

    if degree == 1:
        vals[:] = lam
        grads[:] = G
        return vals, grads

    if degree == 2:
        for i in range(3):
            li = lam[:, i]
            vals[:, i] = li * (2 * li - 1)
            grads[:, i] = (4 * li - 1)[:, None] * G[i]
        for e, (a, b) in enumerate(_LOCAL_EDGES):
            la, lb = lam[:, a], lam[:, b]
            vals[:, 3 + e] = 4 * la * lb
            grads[:, 3 + e] = 4 * (lb[:, None] * G[a] + la[:, None] * G[b])
        return vals, grads

    for i in range(3):
        li = lam[:, i]
        vals[:, i] = 0.5 * li * (3 * li - 1) * (3 * li - 2)
        grads[:, i] = (0.5 * (27 * li**2 - 18 * li + 2))[:, None] * G[i]
    k = 3
    for a, b in _LOCAL_EDGES:
        for near, far in ((a, b), (b, a)):
            la, lb = lam[:, near], lam[:, far]
            vals[:, k] = 4.5 * la * lb * (3 * la - 1)
            grads[:, k] = 4.5 * (
                (6 * la * lb - lb)[:, None] * G[near] + (3 * la**2 - la)[:, None] * G[far]
            )
            k += 1
    vals[:, 9] = 27 * lam[:, 0] * lam[:, 1] * lam[:, 2]
    grads[:, 9] = 27 * (
        (lam[:, 1] * lam[:, 2])[:, None] * G[0]
        + (lam[:, 0] * lam[:, 2])[:, None] * G[1]
        + (lam[:, 0] * lam[:, 1])[:, None] * G[2]
    )
    return vals, grads


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    order: int


@lru_cache(maxsize=None)
def triangle_quadrature(order: int) -> QuadratureRule:
    """Rule on the reference triangle exact for total degree ``order``.

    Orders 1 and 2 are the centroid and edge-midpoint rules; higher orders
    use a collapsed Gauss-Jacobi x Gauss-Legendre product.
    """
    if not 1 <= order <= MAX_QUADRATURE_ORDER:
        raise ValueError(f"unsupported quadrature order {order}")
    if order == 1:
        pts = np.array([[1.0, 1.0]]) / 3.0
        wts = np.array([0.5])
    elif order == 2:
        pts = np.array([[0.5, 0.0], [0.5, 0.5], [0.0, 0.5]])
        wts = np.full(3, 1.0 / 6.0)
    else:
        n = (order + 2) // 2
        s, ws = roots_legendre(n)
        r, wr = roots_jacobi(n, 1.0, 0.0)
        a = 0.5 * (s + 1.0)
        eta = 0.5 * (r + 1.0)
        A, E = np.meshgrid(a, eta, indexing="ij")
        pts = np.column_stack([(A * (1.0 - E)).ravel(), E.ravel()])
        wts = (np.outer(0.5 * ws, 0.25 * wr)).ravel()
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(pts, wts, order)


def gauss_line(npts: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points and weights on [0, 1]."""
    s, w = roots_legendre(npts)
    return 0.5 * (s + 1.0), 0.5 * w


@dataclass(frozen=True, eq=False)
class CellGeometry:
    origin: np.ndarray  # (T, 2)
    jac: np.ndarray  # (T, 2, 2), columns are the two edge vectors
    det: np.ndarray  # (T,)
    inv: np.ndarray  # (T, 2, 2)

    @classmethod
    def of(cls, mesh: Mesh) -> "CellGeometry":
        p = mesh.vertices[mesh.triangles]
        jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
        det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        inv = np.empty_like(jac)
        inv[:, 0, 0] = jac[:, 1, 1] / det
        inv[:, 1, 1] = jac[:, 0, 0] / det
        inv[:, 0, 1] = -jac[:, 0, 1] / det
        inv[:, 1, 0] = -jac[:, 1, 0] / det
        return cls(p[:, 0], jac, det, inv)

    def map_points(self, ref_points: np.ndarray) -> np.ndarray:
        """Physical coordinates ``(T, npts, 2)`` of reference points."""
        return self.origin[:, None, :] + np.einsum("tij,qj->tqi", self.jac, ref_points)

    def physical_grads(self, ref_grads: np.ndarray) -> np.ndarray:
        """``(T, npts, nloc, 2)`` from reference gradients ``(npts, nloc, 2)``."""
        return np.einsum("qaj,tji->tqai", ref_grads, self.inv)


class FunctionSpace:
    """Continuous Lagrange space of given degree with 1 or 2 components.

    Vector DOFs are interleaved: ``dof = components * node + component``.
    """

    def __init__(self, mesh: Mesh, degree: int, components: int = 1):
        _check_degree(degree)
        if components not in (1, 2):
            raise ValueError("components must be 1 or 2")
        self.mesh = mesh
        self.degree = degree
        self.components = components

        V, E, T = mesh.num_vertices, mesh.num_edges, mesh.num_triangles
        per_edge = degree - 1
        self.num_nodes = V + per_edge * E + (T if degree == 3 else 0)
        self.num_dofs = components * self.num_nodes

        nloc = num_local_nodes(degree)
        cells = np.empty((T, nloc), dtype=np.int64)
        cells[:, :3] = mesh.triangles
        col = 3
        for e, (a, b) in enumerate(_LOCAL_EDGES):
            g = mesh.cell_edges[:, e]
            forward = mesh.triangles[:, a] < mesh.triangles[:, b]
            for m in range(per_edge):
                mm = np.where(forward, m, per_edge - 1 - m)
                cells[:, col] = V + g * per_edge + mm
                col += 1
        if degree == 3:
            cells[:, 9] = V + per_edge * E + np.arange(T)
        self.cell_nodes = cells

        coords = np.empty((self.num_nodes, 2))
        coords[:V] = mesh.vertices
        if per_edge:
            p0 = mesh.vertices[mesh.edges[:, 0]]
            p1 = mesh.vertices[mesh.edges[:, 1]]
            for m in range(per_edge):
                s = (m + 1) / degree
                coords[V + m : V + per_edge * E : per_edge] = (1 - s) * p0 + s * p1
        if degree == 3:
            coords[V + per_edge * E :] = mesh.vertices[mesh.triangles].mean(axis=1)
        self.node_coords = coords

        # lowest marker of any boundary edge touching the node, 0 if interior
        marker = np.zeros(self.num_nodes, dtype=np.int64)
        bedges = np.flatnonzero(mesh.edge_markers)
        order = np.argsort(-mesh.edge_markers[bedges], kind="stable")
        for e in bedges[order]:
            m = mesh.edge_markers[e]
            marker[mesh.edges[e]] = m
            marker[V + e * per_edge : V + (e + 1) * per_edge] = m
        self.node_markers = marker

        if components == 1:
            self.cell_dofs = cells
        else:
            self.cell_dofs = (2 * cells[:, :, None] + np.arange(2)).reshape(T, -1)
        self.geometry = CellGeometry.of(mesh)

    def __repr__(self):
        return (
            f"FunctionSpace(P{self.degree}, components={self.components}, "
            f"dofs={self.num_dofs})"
        )

    @property
    def dof_coords(self) -> np.ndarray:
        return np.repeat(self.node_coords, self.components, axis=0)

    def boundary_nodes(self, markers) -> np.ndarray:
        """Nodes on any boundary edge carrying one of ``markers``."""
        markers = np.atleast_1d(markers)
        mesh = self.mesh
        edges = np.flatnonzero(np.isin(mesh.edge_markers, markers) & (mesh.edge_markers > 0))
        per_edge = self.degree - 1
        nodes = [mesh.edges[edges].ravel()]
        for m in range(per_edge):
            nodes.append(mesh.num_vertices + edges * per_edge + m)
        return np.unique(np.concatenate(nodes)) if len(edges) else np.empty(0, np.int64)

    def boundary_dofs(self, markers) -> np.ndarray:
        nodes = self.boundary_nodes(markers)
        c = self.components
        return (c * nodes[:, None] + np.arange(c)).ravel()

    def same_mesh(self, other: "FunctionSpace") -> bool:
        return self.mesh is other.mesh


def build_space(mesh: Mesh, degree: int, components: int = 1) -> FunctionSpace:
    return FunctionSpace(mesh, degree, components)


Field = Callable[..., object]


def sample(func: Field, x: np.ndarray, y: np.ndarray, t: float, components: int) -> np.ndarray:
    """Evaluate ``func(x, y, t)`` and broadcast to ``(components, *x.shape)``."""
    val = func(x, y, t)
    if components == 1:
        return np.broadcast_to(np.asarray(val, dtype=float), x.shape)[None]
    if isinstance(val, (tuple, list)):
        return np.stack([np.broadcast_to(np.asarray(v, dtype=float), x.shape) for v in val])
    return np.broadcast_to(np.asarray(val, dtype=float), (components,) + x.shape)


def interpolate(space: FunctionSpace, func: Field, t: float = 0.0) -> np.ndarray:
    """Nodal interpolant; ``func(x, y, t)`` returns an array or a 2-sequence."""
    x, y = space.node_coords[:, 0], space.node_coords[:, 1]
    vals = sample(func, x, y, t, space.components)
    return np.ascontiguousarray(vals.T).reshape(-1)


def locate(mesh: Mesh, point, tol: float = 1e-12) -> tuple[int, np.ndarray]:
    """Cell containing ``point`` and its reference coordinates (linear scan)."""
    geo = CellGeometry.of(mesh)
    d = np.asarray(point, dtype=float) - geo.origin
    ref = np.einsum("tij,tj->ti", geo.inv, d)
    lam = np.column_stack([1.0 - ref.sum(axis=1), ref])
    inside = np.flatnonzero(lam.min(axis=1) >= -tol)
    if not len(inside):
        raise ValueError(f"point {tuple(point)} lies outside the mesh")
    t = int(inside[0])
    return t, ref[t]


def evaluate_field(space: FunctionSpace, coeffs: np.ndarray, point) -> np.ndarray | float:
    t, ref = locate(space.mesh, point)
    vals, _ = lagrange_basis(space.degree, ref)
    local = np.asarray(coeffs)[space.cell_dofs[t]].reshape(-1, space.components)
    out = vals[0] @ local
    return float(out[0]) if space.components == 1 else out


def evaluate_gradient(space: FunctionSpace, coeffs: np.ndarray, point) -> np.ndarray:
    """Gradient ``(2,)`` for scalars, Jacobian ``(2, 2)`` (row = component) for vectors."""
    t, ref = locate(space.mesh, point)
    _, grads = lagrange_basis(space.degree, ref)
    g = grads[0] @ space.geometry.inv[t]
    local = np.asarray(coeffs)[space.cell_dofs[t]].reshape(-1, space.components)
    jac = local.T @ g
    return jac[0] if space.components == 1 else jac
