"""Time integrators for the total-pressure MPET system.

Every run starts with one fully coupled backward-Euler step. Afterwards

* ``monolithic`` keeps solving the coupled system,
* ``sequential`` solves the Stokes block with lagged pressures and then the
  pressure block with the fresh total-pressure increment,
* ``parallel_split`` solves the Stokes block and a stabilized pressure block
  that only see data from levels ``n`` and ``n - 1``, so both solves can
  run concurrently.

Unknown ordering in coupled vectors: ``[u, xi, p_1, ..., p_A]``.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import assembly as asm
from .assembly import LoadSet, MpetParameters
from .fem import FunctionSpace, interpolate
from .linalg import LinearSolver, SolverReport, block_compose
from .mesh import Mesh

SCHEMES = ("monolithic", "sequential", "parallel_split")


def stabilization_coefficient(params: MpetParameters) -> float:
    """Stabilizer weight ``L = multiplier * mu / lam**2``."""
    return params.L_multiplier * params.mu / params.lam**2


@dataclass
class SchemeConfig:
    scheme: str = "parallel_split"
    dt: float = 0.1
    T: float = 1.0
    k: int = 2
    l: int = 1
    solver: str = "direct"  # or "krylov"
    tol: float = 1e-10
    max_iter: int | None = None
    workers: int = 1
    warm_start: bool = True
    snapshot_times: tuple = ()
    record_energy: bool = False

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.k < 2 or self.l < 1 or self.k > 3 or self.l > 3:
            raise ValueError("need 2 <= k <= 3 and 1 <= l <= 3")
        if self.solver not in ("direct", "krylov"):
            raise ValueError(f"unknown solver {self.solver!r}")
        if self.workers not in (1, 2):
            raise ValueError("worker count must be 1 or 2")
        if not self.dt > 0 or not self.T > 0:
            raise ValueError("dt and T must be positive")
        if abs(self.T / self.dt - self.num_steps) > 1e-8 * max(1, self.num_steps):
            raise ValueError("T must be an integer multiple of dt")

    @property
    def num_steps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass
class MpetProblem:
    mesh: Mesh
    params: MpetParameters
    loads: LoadSet
    u0: object = None  # callable (x, y, t) -> 2-vector; None means zero
    p0: list = field(default_factory=list)  # one callable per network
    name: str = ""


@dataclass
class SimulationState:
    n: int
    t: float
    u: np.ndarray
    xi: np.ndarray
    p: np.ndarray  # (A, nQ)
    xi_prev: np.ndarray | None = None
    p_prev: np.ndarray | None = None

    def copy(self) -> "SimulationState":
        cp = lambda a: None if a is None else a.copy()  # noqa: E731
        return SimulationState(self.n, self.t, self.u.copy(), self.xi.copy(), self.p.copy(),
                               cp(self.xi_prev), cp(self.p_prev))

    def advance(self, u, xi, p, dt) -> "SimulationState":
        return SimulationState(self.n + 1, (self.n + 1) * dt, u, xi, p, self.xi, self.p)


class Discretization:
    """Spaces and time-independent matrices of one problem."""

    def __init__(self, problem: MpetProblem, k: int = 2, l: int = 1):
        self.problem = problem
        self.params = prm = problem.params
        self.loads = problem.loads
        mesh = problem.mesh
        self.A = prm.num_networks
        if self.loads.num_networks != self.A:
            raise ValueError("load set and parameters disagree on the network count")
        self.V = FunctionSpace(mesh, k, 2)
        self.W = FunctionSpace(mesh, k - 1, 1)
        self.Q = FunctionSpace(mesh, l, 1)

        self.K_u = asm.assemble_elasticity(self.V, prm.mu)
        self.B = asm.assemble_divergence(self.V, self.W)
        self.M_w = asm.assemble_mass(self.W)
        self.M_p = asm.assemble_mass(self.Q)
        self.K_p = asm.assemble_diffusion(self.Q, 1.0)
        self.C_wp = asm.assemble_mixed_mass(self.W, self.Q)
        self.C_pw = self.C_wp.T.tocsr()
        self.transfer = asm.assemble_transfer(self.Q, prm.s, self.M_p)
        self.N = (
            asm.assemble_normal_trace(self.V, self.Q, self.loads.pressure_traction)
            if len(self.loads.pressure_traction) else None
        )

        nV, nW, nQ = self.V.num_dofs, self.W.num_dofs, self.Q.num_dofs
        self.sizes = (nV, nW, nQ)
        self.offsets = np.cumsum([0, nV, nW] + [nQ] * self.A)

    # --- states --------------------------------------------------------

    def initial_state(self) -> SimulationState:
        pr = self.problem
        u = np.zeros(self.V.num_dofs) if pr.u0 is None else interpolate(self.V, pr.u0, 0.0)
        p = np.zeros((self.A, self.Q.num_dofs))
        for j, f in enumerate(pr.p0 or []):
            if f is not None:
                p[j] = interpolate(self.Q, f, 0.0)
        return self.state_from(u, p)

    def state_from(self, u, p) -> SimulationState:
        """Level-0 state from coefficient vectors; ``xi`` is derived."""
        prm = self.params
        u = np.asarray(u, dtype=float)
        p = np.asarray(p, dtype=float).reshape(self.A, self.Q.num_dofs)
        # L2 projection of alpha.p - lam div u onto the total-pressure space
        rhs = self.C_wp @ (prm.alpha @ p) - prm.lam * (self.B @ u)
        xi = LinearSolver(self.M_w).solve(rhs)[0] if np.any(rhs) else np.zeros(self.W.num_dofs)
        return SimulationState(0, 0.0, u, xi, p)

    def split(self, x):
        o = self.offsets
        return x[o[0]:o[1]], x[o[1]:o[2]], x[o[2]:].reshape(self.A, -1)

    # --- load vectors --------------------------------------------------

    def displacement_load(self, t, p_lagged=None):
        L = self.loads
        F = asm.assemble_source(self.V, L.body_force, t)
        for marker, g in L.traction.items():
            F += asm.assemble_neumann(self.V, marker, g, t)
        if self.N is not None and p_lagged is not None:
            F -= self.N @ (self.params.alpha @ p_lagged)
        return F

    def pressure_load(self, j, t):
        L = self.loads
        G = asm.assemble_source(self.Q, L.sources[j], t)
        for marker, g in L.fluxes[j].items():
            G += asm.assemble_neumann(self.Q, marker, g, t)
        return G

    def dirichlet_u(self, t):
        return asm.dirichlet_values(self.V, self.loads.dirichlet_u, t)

    def dirichlet_p(self, j, t):
        return asm.dirichlet_values(self.Q, self.loads.dirichlet_p[j], t)

    # --- operators -----------------------------------------------------

    def stokes_matrix(self):
        lam = self.params.lam
        return block_compose([[self.K_u, -self.B.T], [-self.B, -self.M_w / lam]])

    def _alpha_blocks(self, coefficient, diagonal=None):
        a = self.params.alpha
        blocks = []
        for j in range(self.A):
            row = []
            for i in range(self.A):
                blk = (a[j] * a[i] * coefficient) * self.M_p
                if i == j and diagonal is not None:
                    blk = blk + diagonal(j)
                row.append(blk)
            blocks.append(row)
        return block_compose(blocks)

    def stabilizer_matrix(self, stabilizer):
        """Block matrix ``L alpha_j alpha_i M_p`` of the pressure stabilizer."""
        return self._alpha_blocks(stabilizer)

    def pressure_matrix(self, dt, stabilizer=0.0):
        prm = self.params
        diagonal = lambda j: prm.c[j] * self.M_p + (dt * prm.kappa[j]) * self.K_p  # noqa: E731
        return self._alpha_blocks(1.0 / prm.lam + stabilizer, diagonal) + dt * self.transfer

    def coupled_matrix(self, dt):
        prm = self.params
        lam = prm.lam
        a = prm.alpha
        A = self.A
        P = self.pressure_matrix(dt)
        nQ = self.Q.num_dofs
        rows = [
            [self.K_u, -self.B.T] + [None] * A,
            [-self.B, -self.M_w / lam] + [(a[i] / lam) * self.C_wp for i in range(A)],
        ]
        for j in range(A):
            row = [None, -(a[j] / lam) * self.C_pw]
            row += [P[j * nQ:(j + 1) * nQ, i * nQ:(i + 1) * nQ] for i in range(A)]
            rows.append(row)
        return block_compose(rows)

    def stokes_dofs(self, t):
        return self.dirichlet_u(t)

    def pressure_dofs(self, t, offset=0):
        nQ = self.Q.num_dofs
        dofs, vals = [], []
        for j in range(self.A):
            d, v = self.dirichlet_p(j, t)
            dofs.append(d + offset + j * nQ)
            vals.append(v)
        return np.concatenate(dofs).astype(np.int64), np.concatenate(vals)

    def coupled_dofs(self, t):
        du, vu = self.dirichlet_u(t)
        dp, vp = self.pressure_dofs(t, offset=self.offsets[2])
        return np.concatenate([du, dp]), np.concatenate([vu, vp])

    # --- right-hand sides ----------------------------------------------

    def stokes_rhs(self, t, p_lagged):
        prm = self.params
        Fu = self.displacement_load(t, p_lagged)
        Fw = -(self.C_wp @ (prm.alpha @ p_lagged)) / prm.lam
        return np.concatenate([Fu, Fw])

    def pressure_rhs(self, t, dt, p_n, xi_increment, stabilized_history=None, stabilizer=0.0):
        """Right side of the pressure block multiplied by ``dt``.

        ``xi_increment`` is the total-pressure difference supplying the
        coupling term; ``stabilized_history = 2 p^n - p^{n-1}`` enables the
        stabilizer.
        """
        prm = self.params
        a = prm.alpha
        Map = self.M_p @ (a @ p_n)
        Cxi = self.C_pw @ xi_increment
        Mstab = None
        if stabilized_history is not None and stabilizer:
            Mstab = self.M_p @ (a @ stabilized_history)
        out = []
        for j in range(self.A):
            r = prm.c[j] * (self.M_p @ p_n[j]) + (a[j] / prm.lam) * Map
            r += (a[j] / prm.lam) * Cxi + dt * self.pressure_load(j, t)
            if Mstab is not None:
                r += stabilizer * a[j] * Mstab
            out.append(r)
        return np.concatenate(out)

    def coupled_rhs(self, t, dt, state: SimulationState):
        Fu = self.displacement_load(t, state.p)
        Fw = np.zeros(self.W.num_dofs)
        Fp = self.pressure_rhs(t, dt, state.p, -state.xi)
        return np.concatenate([Fu, Fw, Fp])


class _System:
    """A constrained operator with its solver and a warm-start vector."""

    def __init__(self, matrix, dofs, method, cfg: SchemeConfig, precond=None):
        self.raw = matrix
        self.matrix = asm.constrain_matrix(matrix, dofs)
        self.dofs = dofs
        kind = method if cfg.solver == "krylov" else "direct"
        t0 = time.perf_counter()
        self.solver = LinearSolver(self.matrix, kind, tol=cfg.tol, max_iter=cfg.max_iter,
                                   precond_diag=precond)
        self.setup_seconds = time.perf_counter() - t0
        self.last = None
        self.warm = cfg.warm_start

    def solve(self, rhs, dofs, values):
        if not np.array_equal(dofs, self.dofs):
            raise ValueError("Dirichlet DOF set changed between steps")
        b = asm.constrain_rhs(self.raw, rhs, dofs, values)
        x, report = self.solver.solve(b, self.last if self.warm else None)
        self.last = x
        return x, report


@dataclass
class StepRecord:
    n: int
    t: float
    kind: str
    assemble_seconds: float
    solve_seconds: float
    reports: list


class Integrator:
    """Advances a :class:`Discretization` with one of the three schemes."""

    def __init__(self, disc: Discretization, cfg: SchemeConfig):
        self.disc = disc
        self.cfg = cfg
        self.dt = cfg.dt
        self.L = stabilization_coefficient(disc.params)
        self.setup_seconds = 0.0
        self._coupled = self._stokes = self._pressure = None
        self._pool = None

    # lazily built systems (matrices are time independent)
    def _get(self, name):
        sys_ = getattr(self, "_" + name)
        if sys_ is not None:
            return sys_
        d, cfg = self.disc, self.cfg
        t0 = time.perf_counter()
        if name == "coupled":
            dofs, _ = d.coupled_dofs(0.0)
            sys_ = _System(d.coupled_matrix(self.dt), dofs, "gmres", cfg)
        elif name == "stokes":
            dofs, _ = d.stokes_dofs(0.0)
            scale = 1.0 / d.params.mu + 1.0 / d.params.lam
            diag = np.concatenate([d.K_u.diagonal(), scale * d.M_w.diagonal()])
            diag[dofs] = 1.0
            sys_ = _System(d.stokes_matrix(), dofs, "minres", cfg, precond=diag)
        else:
            stab = self.L if cfg.scheme == "parallel_split" else 0.0
            dofs, _ = d.pressure_dofs(0.0)
            sys_ = _System(d.pressure_matrix(self.dt, stab), dofs, "cg", cfg)
        self.setup_seconds += time.perf_counter() - t0
        setattr(self, "_" + name, sys_)
        return sys_

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    # --- steps ---------------------------------------------------------

    def coupled_step(self, state: SimulationState):
        d, dt = self.disc, self.dt
        sys_ = self._get("coupled")
        t = (state.n + 1) * dt
        t0 = time.perf_counter()
        rhs = d.coupled_rhs(t, dt, state)
        dofs, vals = d.coupled_dofs(t)
        t1 = time.perf_counter()
        x, rep = sys_.solve(rhs, dofs, vals)
        t2 = time.perf_counter()
        u, xi, p = d.split(x)
        new = state.advance(u.copy(), xi.copy(), p.copy(), dt)
        return new, StepRecord(new.n, t, "coupled", t1 - t0, t2 - t1, [rep])

    def _stokes_task(self, t, p_lagged):
        d = self.disc
        t0 = time.perf_counter()
        rhs = d.stokes_rhs(t, p_lagged)
        dofs, vals = d.stokes_dofs(t)
        t1 = time.perf_counter()
        x, rep = self._stokes.solve(rhs, dofs, vals)
        return x, rep, t1 - t0, time.perf_counter() - t1

    def _pressure_task(self, t, p_n, xi_inc, history):
        d = self.disc
        t0 = time.perf_counter()
        stab = self.L if history is not None else 0.0
        rhs = d.pressure_rhs(t, self.dt, p_n, xi_inc, history, stab)
        dofs, vals = d.pressure_dofs(t)
        t1 = time.perf_counter()
        x, rep = self._pressure.solve(rhs, dofs, vals)
        return x, rep, t1 - t0, time.perf_counter() - t1

    def parallel_step(self, state: SimulationState):
        if state.xi_prev is None or state.p_prev is None:
            raise ValueError("the split step needs the previous time level")
        d, dt = self.disc, self.dt
        self._get("stokes")
        self._get("pressure")
        t = (state.n + 1) * dt
        xi_inc = state.xi - state.xi_prev
        history = 2.0 * state.p - state.p_prev
        tw = time.perf_counter()
        if self.cfg.workers == 2:
            if self._pool is None:
                self._pool = ThreadPoolExecutor(max_workers=2)
            fs = self._pool.submit(self._stokes_task, t, state.p)
            fp = self._pool.submit(self._pressure_task, t, state.p, xi_inc, history)
            xs, rs, as_, ss = fs.result()
            xp, rp, ap, sp_ = fp.result()
            wall = time.perf_counter() - tw
            # concurrent phases: attribute the overlap-free wall time
            assemble, solve = max(as_, ap), wall - max(as_, ap)
        else:
            xs, rs, as_, ss = self._stokes_task(t, state.p)
            xp, rp, ap, sp_ = self._pressure_task(t, state.p, xi_inc, history)
            assemble, solve = as_ + ap, ss + sp_
        nV = d.V.num_dofs
        new = state.advance(xs[:nV].copy(), xs[nV:].copy(), xp.reshape(d.A, -1).copy(), dt)
        return new, StepRecord(new.n, t, "parallel", assemble, solve, [rs, rp])

    def sequential_step(self, state: SimulationState):
        d, dt = self.disc, self.dt
        self._get("stokes")
        self._get("pressure")
        t = (state.n + 1) * dt
        xs, rs, as_, ss = self._stokes_task(t, state.p)
        nV = d.V.num_dofs
        u, xi = xs[:nV].copy(), xs[nV:].copy()
        xp, rp, ap, sp_ = self._pressure_task(t, state.p, xi - state.xi, None)
        new = state.advance(u, xi, xp.reshape(d.A, -1).copy(), dt)
        return new, StepRecord(new.n, t, "sequential", as_ + ap, ss + sp_, [rs, rp])

    def step(self, state: SimulationState):
        if state.n == 0 or self.cfg.scheme == "monolithic":
            return self.coupled_step(state)
        if self.cfg.scheme == "parallel_split":
            return self.parallel_step(state)
        return self.sequential_step(state)


@dataclass
class Trajectory:
    config: SchemeConfig
    final: SimulationState
    steps: list
    energies: list
    snapshots: dict
    setup_seconds: float
    total_seconds: float

    @property
    def assemble_seconds(self) -> float:
        return sum(s.assemble_seconds for s in self.steps)

    @property
    def solve_seconds(self) -> float:
        return sum(s.solve_seconds for s in self.steps)

    def timing(self) -> dict:
        return {
            "setup": self.setup_seconds,
            "assembly": self.assemble_seconds,
            "solve": self.solve_seconds,
            "total": self.total_seconds,
        }


def run_simulation(config: SchemeConfig, problem: MpetProblem, disc: Discretization | None = None,
                   initial: SimulationState | None = None) -> Trajectory:
    """Integrate from ``t = 0`` to ``config.T``."""
    from .analysis import discrete_energy

    t_start = time.perf_counter()
    if disc is None:
        disc = Discretization(problem, config.k, config.l)
    setup = time.perf_counter() - t_start
    state = disc.initial_state() if initial is None else initial
    integ = Integrator(disc, config)
    steps, energies, snaps = [], [], {}
    want = sorted(config.snapshot_times)
    if config.record_energy:
        energies.append(discrete_energy(disc, state, 0.0))
    try:
        for _ in range(config.num_steps):
            state, rec = integ.step(state)
            steps.append(rec)
            if config.record_energy:
                energies.append(discrete_energy(disc, state, state.t))
            for ts in want:
                if ts not in snaps and math.isclose(state.t, ts, rel_tol=0, abs_tol=1e-9 * config.dt + 1e-12):
                    snaps[ts] = state.copy()
    finally:
        integ.close()
    total = time.perf_counter() - t_start
    return Trajectory(config, state, steps, energies, snaps, setup + integ.setup_seconds, total)
