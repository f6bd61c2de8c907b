"""Sparse matrices and linear solvers.

Matrices are :class:`scipy.sparse.csr_matrix` with sorted, duplicate-free
column indices. Krylov solvers wrap the SciPy implementations with diagonal
preconditioners and re-check the true residual; :class:`LinearSolver`
binds one operator to one solution strategy for repeated time steps.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

SparseMatrix = sp.csr_matrix

ABS_FLOOR = 1e-14


class SolverError(RuntimeError):
    """Raised when a solve does not meet its residual contract."""

    def __init__(self, message: str, report: "SolverReport"):
        super().__init__(f"{message} ({report})")
        self.report = report


@dataclass
class SolverReport:
    iterations: int
    residual: float
    converged: bool
    seconds: float
    method: str = ""
    history: list = field(default_factory=list, repr=False)


def csr_from_triplets(rows, cols=None, vals=None, shape=None) -> sp.csr_matrix:
    """Build a CSR matrix, summing duplicate ``(i, j)`` contributions.

    Accepts either three parallel arrays or a single sequence of
    ``(i, j, value)`` triplets.
    """
    if cols is None and vals is None:
        trip = list(rows)
        if trip:
            rows, cols, vals = (np.array(c) for c in zip(*trip))
        else:
            rows = cols = np.empty(0, np.int64)
            vals = np.empty(0)
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    vals = np.asarray(vals, dtype=float).ravel()
    if shape is None:
        shape = (int(rows.max(initial=-1)) + 1, int(cols.max(initial=-1)) + 1)
    A = sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def spmv(A, x: np.ndarray) -> np.ndarray:
    return A @ x


def block_compose(blocks) -> sp.csr_matrix:
    """Assemble a block matrix from a grid of sparse blocks (``None`` = zero)."""
    A = sp.bmat(blocks, format="csr")
    A.sum_duplicates()
    A.sort_indices()
    return A


def residual_norm(A, x, b) -> float:
    """Relative residual ``|b - Ax| / |b|`` (absolute when ``b`` vanishes)."""
    nb = np.linalg.norm(b)
    r = np.linalg.norm(b - A @ x)
    return float(r / nb) if nb > 0 else float(r)


def _jacobi(diag: np.ndarray) -> spla.LinearOperator:
    d = np.abs(np.asarray(diag, dtype=float))
    d[d == 0.0] = 1.0
    inv = 1.0 / d
    return spla.LinearOperator((len(d), len(d)), matvec=lambda v: inv * v.ravel(), dtype=float)


def _krylov(method, A, b, x0, tol, max_iter, precond_diag, restart=None, refinements=5):
    t0 = time.perf_counter()
    A = sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    n = len(b)
    nb = np.linalg.norm(b)
    if nb == 0.0:
        x = np.zeros(n)
        return x, SolverReport(0, 0.0, True, time.perf_counter() - t0, method)
    if max_iter is None:
        max_iter = max(10 * n, 100)
    M = _jacobi(A.diagonal() if precond_diag is None else precond_diag)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    history = [residual_norm(A, x, b)]
    iters = 0
    breakdown = False
    rtol = tol
    for _ in range(refinements):
        if history[-1] <= tol:
            break
        count = [0]

        def cb(*_):
            count[0] += 1

        remaining = max(max_iter - iters, 1)
        if method == "cg":
            x, info = spla.cg(A, b, x0=x, rtol=rtol, atol=0.0, maxiter=remaining, M=M, callback=cb)
        elif method == "minres":
            x, info = spla.minres(A, b, x0=x, rtol=rtol, maxiter=remaining, M=M, callback=cb)
        else:
            m = min(restart or 50, n)
            x, info = spla.gmres(
                A, b, x0=x, rtol=rtol, atol=0.0, restart=m,
                maxiter=max(remaining // m, 1), M=M, callback=cb, callback_type="pr_norm",
            )
        iters += count[0]
        history.append(residual_norm(A, x, b))
        if info < 0 or not np.all(np.isfinite(x)):
            breakdown = True
            break
        if iters >= max_iter:
            break
        # preconditioned stopping tests can stop early; tighten and restart
        rtol = max(0.1 * rtol, 1e-15)
    res = history[-1]
    converged = bool(res <= tol) and not breakdown
    report = SolverReport(iters, res, converged, time.perf_counter() - t0, method, history)
    return x, report


def solve_spd(A, b, tol=1e-10, max_iter=None, x0=None, precond_diag=None):
    """Jacobi-preconditioned conjugate gradients."""
    return _krylov("cg", A, b, x0, tol, max_iter, precond_diag)


def solve_sym_indefinite(A, b, tol=1e-10, max_iter=None, x0=None, precond_diag=None):
    """Preconditioned MINRES for symmetric (indefinite) systems.

    ``precond_diag`` is the positive diagonal of the preconditioner; for
    saddle-point blocks pass the elasticity diagonal followed by a scaled
    pressure-mass diagonal.
    """
    return _krylov("minres", A, b, x0, tol, max_iter, precond_diag)


def solve_general(A, b, tol=1e-10, max_iter=None, restart=50, x0=None, precond_diag=None):
    """Restarted, Jacobi-preconditioned GMRES."""
    return _krylov("gmres", A, b, x0, tol, max_iter, precond_diag, restart=restart)


class LinearSolver:
    """One operator prepared for repeated solves.

    ``method`` is ``"direct"`` (sparse LU, factorized once) or one of
    ``"cg"``, ``"minres"``, ``"gmres"``.
    """

    def __init__(self, A, method="direct", tol=1e-10, max_iter=None, precond_diag=None, restart=50):
        self.A = sp.csr_matrix(A)
        self.method = method
        self.tol = tol
        self.max_iter = max_iter
        self.precond_diag = precond_diag
        self.restart = restart
        t0 = time.perf_counter()
        if method == "direct":
            self._lu = spla.splu(self.A.tocsc())
        elif method not in ("cg", "minres", "gmres"):
            raise ValueError(f"unknown solver method {method!r}")
        self.setup_seconds = time.perf_counter() - t0

    def solve(self, b, x0=None):
        b = np.asarray(b, dtype=float)
        if self.method == "direct":
            t0 = time.perf_counter()
            x = self._lu.solve(b)
            res = residual_norm(self.A, x, b)
            # direct solves honour a looser floor: the contract is roundoff-level
            report = SolverReport(1, res, bool(np.isfinite(res)), time.perf_counter() - t0, "direct")
        elif self.method == "cg":
            x, report = solve_spd(self.A, b, self.tol, self.max_iter, x0, self.precond_diag)
        elif self.method == "minres":
            x, report = solve_sym_indefinite(self.A, b, self.tol, self.max_iter, x0, self.precond_diag)
        else:
            x, report = solve_general(
                self.A, b, self.tol, self.max_iter, self.restart, x0, self.precond_diag
            )
        if not report.converged:
            raise SolverError(f"{self.method} solve failed", report)
        return x, report
