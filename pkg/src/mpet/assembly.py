"""Bilinear/linear forms of the total-pressure MPET system and boundary conditions.

Unknowns are the displacement ``u`` (vector P_k), the total pressure
``xi`` (P_{k-1}) and the network pressures ``p_1 .. p_A`` (P_l). All
matrices are assembled cell-wise with vectorized quadrature and scattered
into CSR in a fixed order, so assembly is bitwise reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .fem import FunctionSpace, gauss_line, lagrange_basis, sample, triangle_quadrature
from .linalg import block_compose, csr_from_triplets


def lame_from_young(E: float, nu: float) -> tuple[float, float]:
    """``(mu, lambda)`` from Young's modulus and Poisson ratio."""
    lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    mu = E / (2.0 * (1.0 + nu))
    return mu, lam


@dataclass
class MpetParameters:
    mu: float
    lam: float
    c: np.ndarray
    alpha: np.ndarray
    kappa: np.ndarray
    s: np.ndarray
    L_multiplier: float = 1.0

    def __post_init__(self):
        self.c = np.atleast_1d(np.asarray(self.c, dtype=float)).copy()
        A = len(self.c)
        self.alpha = np.broadcast_to(np.asarray(self.alpha, dtype=float), (A,)).copy()
        self.kappa = np.broadcast_to(np.asarray(self.kappa, dtype=float), (A,)).copy()
        self.s = np.asarray(self.s, dtype=float)
        if self.s.ndim == 0:
            self.s = self.s * (1.0 - np.eye(A))
        if self.s.shape != (A, A):
            raise ValueError("transfer matrix must be A x A")
        if not self.mu > 0 or not self.lam > 0:
            raise ValueError("Lame parameters must be positive")
        if np.any(self.c < 0):
            raise ValueError("storage coefficients must be non-negative")
        if np.any(self.kappa <= 0):
            raise ValueError("conductivities must be positive")
        if np.any(self.alpha <= 0) or np.any(self.alpha > 1):
            raise ValueError("Biot-Willis coefficients must lie in (0, 1]")
        _check_transfer(self.s)

    @classmethod
    def from_young(cls, E, nu, c, alpha, kappa, s, L_multiplier=1.0):
        mu, lam = lame_from_young(E, nu)
        return cls(mu, lam, c, alpha, kappa, s, L_multiplier)

    @property
    def num_networks(self) -> int:
        return len(self.c)


def _check_transfer(s):
    if not np.array_equal(s, s.T):
        raise ValueError("transfer coefficients must be symmetric")
    if np.any(np.diag(s) != 0):
        raise ValueError("transfer matrix must have a zero diagonal")
    if np.any(s < 0):
        raise ValueError("transfer coefficients must be non-negative")


FieldFn = Callable[..., object]


@dataclass
class LoadSet:
    """Data of the boundary-value problem; every callable is ``f(x, y, t)``.

    ``pressure_traction`` lists displacement-Neumann markers on which the
    total traction equals ``-(alpha . p) n`` with the current discrete
    pressures.
    """

    num_networks: int
    body_force: FieldFn | None = None
    traction: Mapping[int, FieldFn] = field(default_factory=dict)
    sources: Sequence[FieldFn | None] = ()
    fluxes: Sequence[Mapping[int, FieldFn]] = ()
    dirichlet_u: Mapping[int, FieldFn] = field(default_factory=dict)
    dirichlet_p: Sequence[Mapping[int, FieldFn]] = ()
    pressure_traction: Sequence[int] = ()

    def __post_init__(self):
        A = self.num_networks
        self.sources = list(self.sources) or [None] * A
        self.fluxes = list(self.fluxes) or [{} for _ in range(A)]
        self.dirichlet_p = list(self.dirichlet_p) or [{} for _ in range(A)]
        if not len(self.sources) == len(self.fluxes) == len(self.dirichlet_p) == A:
            raise ValueError("per-network load lists must have one entry per network")


# --- element kernels -------------------------------------------------------


def _scatter(rows, cols, Ke, shape) -> sp.csr_matrix:
    T, nr = rows.shape
    nc = cols.shape[1]
    R = np.broadcast_to(rows[:, :, None], (T, nr, nc))
    C = np.broadcast_to(cols[:, None, :], (T, nr, nc))
    return csr_from_triplets(R.ravel(), C.ravel(), Ke.ravel(), shape)


def _weights(space: FunctionSpace, order: int):
    rule = triangle_quadrature(order)
    return rule, rule.weights[None, :] * np.abs(space.geometry.det)[:, None]


def _scalar_only(space, what):
    if space.components != 1:
        raise ValueError(f"{what} needs a scalar space")


def assemble_mass(space: FunctionSpace, coefficient: float = 1.0, order: int | None = None):
    """``coefficient * (phi_j, phi_i)``; vector spaces get the block-diagonal mass."""
    if coefficient < 0:
        raise ValueError("mass coefficient must be non-negative")
    rule, w = _weights(space, order or 2 * space.degree)
    phi, _ = lagrange_basis(space.degree, rule.points)
    Ke = coefficient * np.einsum("tq,qa,qb->tab", w, phi, phi)
    if space.components == 2:
        T, n, _ = Ke.shape
        full = np.zeros((T, n, 2, n, 2))
        full[:, :, 0, :, 0] = Ke
        full[:, :, 1, :, 1] = Ke
        Ke = full.reshape(T, 2 * n, 2 * n)
    return _scatter(space.cell_dofs, space.cell_dofs, Ke, (space.num_dofs,) * 2)


def assemble_mixed_mass(row_space: FunctionSpace, col_space: FunctionSpace, coefficient=1.0):
    """``coefficient * (col_j, row_i)`` between two scalar spaces on one mesh."""
    _scalar_only(row_space, "mixed mass")
    _scalar_only(col_space, "mixed mass")
    if not row_space.same_mesh(col_space):
        raise ValueError("spaces live on different meshes")
    rule, w = _weights(row_space, row_space.degree + col_space.degree)
    pr, _ = lagrange_basis(row_space.degree, rule.points)
    pc, _ = lagrange_basis(col_space.degree, rule.points)
    Ke = coefficient * np.einsum("tq,qa,qb->tab", w, pr, pc)
    return _scatter(
        row_space.cell_dofs, col_space.cell_dofs, Ke, (row_space.num_dofs, col_space.num_dofs)
    )


def assemble_diffusion(space: FunctionSpace, kappa: float = 1.0):
    """``kappa * (grad p, grad psi)`` on a scalar space."""
    _scalar_only(space, "diffusion")
    if kappa <= 0:
        raise ValueError("conductivity must be positive")
    rule, w = _weights(space, 2 * space.degree)
    _, dref = lagrange_basis(space.degree, rule.points)
    G = space.geometry.physical_grads(dref)
    Ke = kappa * np.einsum("tq,tqai,tqbi->tab", w, G, G)
    return _scatter(space.cell_dofs, space.cell_dofs, Ke, (space.num_dofs,) * 2)


def assemble_elasticity(space_u: FunctionSpace, mu: float):
    """``2 mu (eps(u), eps(v))`` on an interleaved vector space."""
    if space_u.components != 2:
        raise ValueError("elasticity needs a 2-component space")
    rule, w = _weights(space_u, 2 * space_u.degree)
    _, dref = lagrange_basis(space_u.degree, rule.points)
    G = space_u.geometry.physical_grads(dref)
    S = np.einsum("tq,tqai,tqbi->tab", w, G, G)
    X = np.einsum("tq,tqad,tqbc->tabcd", w, G, G)
    T, n, _ = S.shape
    Ke = X.copy()
    Ke[:, :, :, 0, 0] += S
    Ke[:, :, :, 1, 1] += S
    # (t, a, b, c, d) -> (t, a, c, b, d)
    Ke = mu * Ke.transpose(0, 1, 3, 2, 4).reshape(T, 2 * n, 2 * n)
    return _scatter(space_u.cell_dofs, space_u.cell_dofs, Ke, (space_u.num_dofs,) * 2)


def assemble_divergence(space_u: FunctionSpace, space_scalar: FunctionSpace):
    """``B[i, j] = (phi_i, div v_j)``; rows follow the scalar space."""
    if space_u.components != 2:
        raise ValueError("divergence needs a 2-component trial space")
    _scalar_only(space_scalar, "divergence")
    if not space_u.same_mesh(space_scalar):
        raise ValueError("spaces live on different meshes")
    rule, w = _weights(space_u, space_u.degree + space_scalar.degree)
    phi, _ = lagrange_basis(space_scalar.degree, rule.points)
    _, dref = lagrange_basis(space_u.degree, rule.points)
    G = space_u.geometry.physical_grads(dref)
    Ke = np.einsum("tq,qi,tqbd->tibd", w, phi, G)
    T, ni, nb, _ = Ke.shape
    return _scatter(
        space_scalar.cell_dofs,
        space_u.cell_dofs,
        Ke.reshape(T, ni, 2 * nb),
        (space_scalar.num_dofs, space_u.num_dofs),
    )


def assemble_transfer(spaces_p, s, mass=None):
    """Block matrix of ``sum_i s[j][i] (p_j - p_i, psi_j)`` over all networks."""
    s = np.asarray(s, dtype=float)
    _check_transfer(s)
    if isinstance(spaces_p, FunctionSpace):
        spaces_p = [spaces_p] * len(s)
    if len(spaces_p) != len(s):
        raise ValueError("one pressure space per network required")
    space = spaces_p[0]
    if any(sp_ is not space for sp_ in spaces_p):
        raise ValueError("all networks must share one pressure space")
    M = assemble_mass(space) if mass is None else mass
    A = len(s)
    blocks = [
        [(s[j].sum() * M if i == j else -s[j, i] * M) for i in range(A)] for j in range(A)
    ]
    return block_compose(blocks)


def assemble_source(space: FunctionSpace, func, t: float = 0.0, order: int | None = None):
    """``(f, v)`` for a callable ``f(x, y, t)``."""
    if func is None:
        return np.zeros(space.num_dofs)
    w, phi, xq = _load_tabulation(space, min(order or 2 * space.degree + 2, 8))
    vals = sample(func, xq[..., 0], xq[..., 1], t, space.components)  # (c, T, q)
    Fe = ((vals * w) @ phi).transpose(1, 2, 0).reshape(len(w), -1)  # (T, a*c)
    return np.bincount(space.cell_dofs.ravel(), Fe.ravel(), minlength=space.num_dofs)


def _load_tabulation(space: FunctionSpace, order: int):
    """Weights, basis values and physical points of a rule; cached per space
    because time-dependent loads are re-assembled every step."""
    cache = space.__dict__.setdefault("_load_tabulation", {})
    if order not in cache:
        rule, w = _weights(space, order)
        phi, _ = lagrange_basis(space.degree, rule.points)
        cache[order] = (w, phi, space.geometry.map_points(rule.points))
    return cache[order]


def _marked_edges(space: FunctionSpace, marker: int):
    mesh = space.mesh
    if marker not in mesh.markers():
        raise ValueError(f"unknown boundary marker {marker}")
    return np.flatnonzero(mesh.edge_markers == marker)


def _edge_data(space: FunctionSpace, edges: np.ndarray, npts: int):
    """Edge node DOFs, 1D basis values, quadrature points, weights and outward normals."""
    mesh = space.mesh
    k = space.degree
    a, b = mesh.edges[edges, 0], mesh.edges[edges, 1]
    pa, pb = mesh.vertices[a], mesh.vertices[b]
    nodes = [a, b] + [mesh.num_vertices + edges * (k - 1) + m for m in range(k - 1)]
    nodes = np.column_stack(nodes)
    # 1D Lagrange basis on [0,1] with nodes 0, 1, 1/k, 2/k, ...
    ref = np.array([0.0, 1.0] + [(m + 1) / k for m in range(k - 1)])
    s, ws = gauss_line(npts)
    V = np.ones((npts, k + 1))
    for i in range(k + 1):
        for j in range(k + 1):
            if i != j:
                V[:, i] *= (s - ref[j]) / (ref[i] - ref[j])
    length = np.linalg.norm(pb - pa, axis=1)
    xq = pa[:, None, :] + s[None, :, None] * (pb - pa)[:, None, :]
    w = ws[None, :] * length[:, None]
    tangent = (pb - pa) / length[:, None]
    normal = np.column_stack([tangent[:, 1], -tangent[:, 0]])
    # orient outward: point away from the owning cell's centroid
    owner = _edge_owner(mesh, edges)
    centroid = mesh.vertices[mesh.triangles[owner]].mean(axis=1)
    flip = np.einsum("ei,ei->e", normal, 0.5 * (pa + pb) - centroid) < 0
    normal[flip] *= -1
    return nodes, V, xq, w, normal


def _edge_owner(mesh, edges):
    cells = np.repeat(np.arange(mesh.num_triangles), 3)
    flat = mesh.cell_edges.ravel()
    owner = np.empty(mesh.num_edges, dtype=np.int64)
    owner[flat] = cells
    return owner[edges]


def assemble_neumann(space: FunctionSpace, marker: int, func, t: float = 0.0):
    """``<g, v>`` over edges with ``marker`` using ``degree + 1`` Gauss points.

    ``func(x, y, t)`` may also accept a fourth ``normal`` argument (shape
    ``(2, E, q)``) when declared with ``wants_normal = True``.
    """
    edges = _marked_edges(space, marker)
    out = np.zeros(space.num_dofs)
    if func is None or not len(edges):
        return out
    nodes, V, xq, w, normal = _edge_data(space, edges, space.degree + 1)
    c = space.components
    if getattr(func, "wants_normal", False):
        nq = np.broadcast_to(normal.T[:, :, None], (2,) + xq.shape[:2])
        vals = sample(lambda x, y, tt: func(x, y, tt, nq), xq[..., 0], xq[..., 1], t, c)
    else:
        vals = sample(func, xq[..., 0], xq[..., 1], t, c)
    Fe = np.einsum("eq,qa,ceq->eac", w, V, vals)
    dofs = (c * nodes[:, :, None] + np.arange(c)).reshape(len(edges), -1)
    np.add.at(out, dofs.ravel(), Fe.reshape(len(edges), -1).ravel())
    return out


def assemble_normal_trace(space_u: FunctionSpace, space_p: FunctionSpace, markers):
    """``N[v_j, p_i] = <p_i n, v_j>`` over the given markers (rows follow ``space_u``)."""
    rows, cols, vals = [], [], []
    for marker in np.atleast_1d(markers):
        edges = _marked_edges(space_u, int(marker))
        if not len(edges):
            continue
        npts = space_u.degree + space_p.degree
        nu_, Vu, _, w, normal = _edge_data(space_u, edges, npts)
        np_, Vp, _, _, _ = _edge_data(space_p, edges, npts)
        Ke = np.einsum("eq,qa,qb,ed->eadb", w, Vu, Vp, normal)
        E, na, _, nb = Ke.shape
        rdofs = (2 * nu_[:, :, None] + np.arange(2)).reshape(E, -1)
        R = np.broadcast_to(rdofs[:, :, None], (E, 2 * na, nb))
        C = np.broadcast_to(np_[:, None, :], (E, 2 * na, nb))
        rows.append(R.ravel())
        cols.append(C.ravel())
        vals.append(Ke.reshape(E, 2 * na, nb).ravel())
    if not rows:
        return sp.csr_matrix((space_u.num_dofs, space_p.num_dofs))
    return csr_from_triplets(
        np.concatenate(rows), np.concatenate(cols), np.concatenate(vals),
        (space_u.num_dofs, space_p.num_dofs),
    )


# --- Dirichlet conditions --------------------------------------------------


def dirichlet_values(space: FunctionSpace, data: Mapping[int, FieldFn], t: float):
    """DOFs and values prescribed by ``{marker: g(x, y, t)}``.

    On marker junctions the lowest marker's datum wins.
    """
    dofs = np.empty(0, dtype=np.int64)
    vals = np.empty(0)
    c = space.components
    for marker in sorted(data, reverse=True):
        nodes = space.boundary_nodes(marker)
        xy = space.node_coords[nodes]
        v = sample(data[marker], xy[:, 0], xy[:, 1], t, c)
        d = (c * nodes[:, None] + np.arange(c)).ravel()
        dofs = np.concatenate([dofs, d])
        vals = np.concatenate([vals, np.ascontiguousarray(v.T).ravel()])
    if not len(dofs):
        return dofs, vals
    # keep the last write per DOF (lowest marker)
    rev = len(dofs) - 1 - np.unique(dofs[::-1], return_index=True)[1]
    return dofs[rev], vals[rev]


def constrain_matrix(A, dofs) -> sp.csr_matrix:
    """Zero the rows and columns of ``dofs`` and put 1 on their diagonal."""
    n = A.shape[0]
    keep = np.ones(n)
    keep[dofs] = 0.0
    K = sp.diags(keep)
    Ac = (K @ A @ K + sp.diags(1.0 - keep)).tocsr()
    Ac.eliminate_zeros()
    Ac.sort_indices()
    return Ac


def constrain_rhs(A, b, dofs, values) -> np.ndarray:
    """Lift prescribed values into ``b`` consistently with :func:`constrain_matrix`."""
    b = np.array(b, dtype=float)
    if len(dofs):
        g = np.zeros(A.shape[1])
        g[dofs] = values
        b -= A @ g
        b[dofs] = values
    return b


def apply_dirichlet(A, b, dofs, values):
    """Symmetric elimination of prescribed DOFs; returns ``(A_c, b_c)``."""
    return constrain_matrix(A, dofs), constrain_rhs(A, b, dofs, values)
