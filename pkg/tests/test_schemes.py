import numpy as np
import pytest

from mpet.analysis import field_difference, mms_errors
from mpet.assembly import constrain_matrix, constrain_rhs
from mpet.brain import BrainGeometry, brain_problem
from mpet.mesh import unit_square_mesh
from mpet.mms import ManufacturedCase, case_parameters
from mpet.schemes import (
    SCHEMES,
    Discretization,
    Integrator,
    SchemeConfig,
    SimulationState,
    run_simulation,
    stabilization_coefficient,
)
from mpet.assembly import MpetParameters


@pytest.fixture(scope="module")
def case1():
    return ManufacturedCase.named("case1")


@pytest.fixture(scope="module")
def disc8(case1):
    return Discretization(case1.problem(unit_square_mesh(8)), 2, 1)


@pytest.fixture(scope="module")
def disc4(case1):
    return Discretization(case1.problem(unit_square_mesh(4)), 2, 1)


def exact_state(disc, case, n, dt):
    """Level-``n`` state interpolated from the exact fields (with history)."""
    from mpet.fem import interpolate

    def level(m):
        t = m * dt
        u = interpolate(disc.V, case.u, t)
        p = np.array([interpolate(disc.Q, lambda x, y, tt, j=j: case.p(j, x, y, tt), t) for j in range(2)])
        s = disc.state_from(u, p)
        s.n, s.t = m, t
        return s

    cur, prev = level(n), level(n - 1)
    cur.xi_prev, cur.p_prev = prev.xi, prev.p
    return cur


# --- configuration ---------------------------------------------------------


def test_stabilization_coefficient_examples():
    base = dict(c=[1.0], alpha=[1.0], kappa=[1.0], s=np.zeros((1, 1)))
    assert stabilization_coefficient(MpetParameters(1.0, 2.0, **base)) == 0.25
    assert stabilization_coefficient(MpetParameters(1.0, 2.0, **base, L_multiplier=16)) == 4.0
    prm = case_parameters("case2")
    assert prm.lam == pytest.approx(1.6667e8, rel=1e-4)
    assert stabilization_coefficient(prm) == pytest.approx(prm.mu / 2.78e16, rel=2e-3)


@pytest.mark.parametrize("kwargs", [
    dict(scheme="explicit"), dict(k=1), dict(k=4), dict(l=0), dict(solver="lu"),
    dict(workers=3), dict(dt=0.0), dict(dt=0.3, T=1.0),
])
def test_scheme_config_validation(kwargs):
    with pytest.raises(ValueError):
        SchemeConfig(**kwargs)


def test_scheme_config_steps():
    assert SchemeConfig(dt=0.0125, T=3.0).num_steps == 240


# --- trivial problems ------------------------------------------------------


@pytest.mark.parametrize("scheme", SCHEMES)
def test_zero_problem_stays_zero(scheme):
    case = ManufacturedCase(case_parameters("case1"), zero=True)
    traj = run_simulation(SchemeConfig(scheme, 0.1, 0.3), case.problem(unit_square_mesh(3)))
    s = traj.final
    assert not s.u.any() and not s.xi.any() and not s.p.any()


@pytest.mark.parametrize("scheme", SCHEMES)
def test_single_step_is_coupled(scheme, disc4, case1):
    traj = run_simulation(SchemeConfig(scheme, 0.25, 0.25), disc4.problem, disc4)
    assert [r.kind for r in traj.steps] == ["coupled"]
    ref = run_simulation(SchemeConfig("monolithic", 0.25, 0.25), disc4.problem, disc4)
    assert np.array_equal(traj.final.u, ref.final.u)
    assert np.array_equal(traj.final.p, ref.final.p)


def test_step_kinds(disc4):
    kinds = {s: [r.kind for r in run_simulation(SchemeConfig(s, 0.25, 0.75), disc4.problem, disc4).steps]
             for s in SCHEMES}
    assert kinds == {
        "monolithic": ["coupled"] * 3,
        "sequential": ["coupled", "sequential", "sequential"],
        "parallel_split": ["coupled", "parallel", "parallel"],
    }


def test_parallel_step_requires_history(disc4):
    it = Integrator(disc4, SchemeConfig("parallel_split", 0.1, 0.1))
    with pytest.raises(ValueError):
        it.parallel_step(disc4.initial_state())


def test_initial_state_total_pressure(disc8, case1):
    from mpet.fem import interpolate

    # polynomial data: alpha.p - lam div u lies in the total-pressure space
    u = interpolate(disc8.V, lambda x, y, t: (x**2, x * y))
    p = np.array([interpolate(disc8.Q, lambda x, y, t: 1 + x), interpolate(disc8.Q, lambda x, y, t: y)])
    s0 = disc8.state_from(u, p)
    lam = disc8.params.lam
    expected = interpolate(disc8.W, lambda x, y, t: (1 + x) + y - lam * 3 * x)
    assert np.allclose(s0.xi, expected, atol=1e-12)
    assert s0.n == 0 and s0.t == 0.0 and s0.xi_prev is None
    zero = disc8.state_from(np.zeros(disc8.V.num_dofs), np.zeros((2, disc8.Q.num_dofs)))
    assert not zero.xi.any()


# --- first step and residuals ----------------------------------------------


def test_first_step_accuracy(disc8, case1):
    dt = 1 / 32
    it = Integrator(disc8, SchemeConfig("monolithic", dt, dt))
    s1, _ = it.step(disc8.initial_state())
    assert s1.t == dt
    e = mms_errors(disc8, s1, case1)
    # ten times the coarsest published magnitudes (h = 1/4, dt = 1/8)
    assert e.u_l2 < 10 * 3.543e-2 and e.p_l2 < 10 * 3.510e-2 and e.xi_l2 < 10 * 7.649e-2
    assert e.u_h1 < 10 * 8.701e-1


def test_coupled_residual(disc8):
    dt = 1 / 16
    s0 = disc8.initial_state()
    s1, _ = Integrator(disc8, SchemeConfig("monolithic", dt, dt)).step(s0)
    A = disc8.coupled_matrix(dt)
    dofs, vals = disc8.coupled_dofs(dt)
    b = constrain_rhs(A, disc8.coupled_rhs(dt, dt, s0), dofs, vals)
    x = np.concatenate([s1.u, s1.xi, s1.p.ravel()])
    Ac = constrain_matrix(A, dofs)
    assert np.linalg.norm(b - Ac @ x) <= 1e-9 * np.linalg.norm(b)


def test_parallel_subsystem_residuals(disc8, case1):
    dt = 1 / 16
    s = exact_state(disc8, case1, 2, dt)
    it = Integrator(disc8, SchemeConfig("parallel_split", dt, 3 * dt))
    new, rec = it.parallel_step(s)
    t = 3 * dt
    S = disc8.stokes_matrix()
    dofs, vals = disc8.stokes_dofs(t)
    b = constrain_rhs(S, disc8.stokes_rhs(t, s.p), dofs, vals)
    x = np.concatenate([new.u, new.xi])
    assert np.linalg.norm(b - constrain_matrix(S, dofs) @ x) <= 1e-9 * np.linalg.norm(b)
    L = stabilization_coefficient(disc8.params)
    P = disc8.pressure_matrix(dt, L)
    dofs, vals = disc8.pressure_dofs(t)
    rhs = disc8.pressure_rhs(t, dt, s.p, s.xi - s.xi_prev, 2 * s.p - s.p_prev, L)
    b = constrain_rhs(P, rhs, dofs, vals)
    assert np.linalg.norm(b - constrain_matrix(P, dofs) @ new.p.ravel()) <= 1e-9 * np.linalg.norm(b)
    assert all(r.converged and r.residual <= 1e-9 for r in rec.reports)


def test_stabilizer_vanishes_for_linear_pressure(disc4):
    rng = np.random.default_rng(0)
    nQ = disc4.Q.num_dofs
    p0 = rng.normal(size=(2, nQ))
    d = rng.normal(size=(2, nQ))
    p_prev, p_n, p_next = p0, p0 + d, p0 + 2 * d
    xi_inc = rng.normal(size=disc4.W.num_dofs)
    dt, L = 0.1, 0.7
    with_stab = disc4.pressure_matrix(dt, L) @ p_next.ravel() - disc4.pressure_rhs(
        0.3, dt, p_n, xi_inc, 2 * p_n - p_prev, L)
    without = disc4.pressure_matrix(dt, 0.0) @ p_next.ravel() - disc4.pressure_rhs(0.3, dt, p_n, xi_inc)
    scale = np.abs(without).max()
    assert np.abs(with_stab - without).max() <= 1e-12 * max(scale, 1.0)


# --- determinism and concurrency -------------------------------------------


def test_worker_count_bitwise(disc8):
    cfg = dict(scheme="parallel_split", dt=1 / 16, T=0.5)
    a = run_simulation(SchemeConfig(**cfg, workers=1), disc8.problem, disc8).final
    b = run_simulation(SchemeConfig(**cfg, workers=2), disc8.problem, disc8).final
    assert np.array_equal(a.u, b.u) and np.array_equal(a.xi, b.xi) and np.array_equal(a.p, b.p)


@pytest.mark.parametrize("scheme", SCHEMES)
def test_repeat_bitwise(scheme, disc4):
    a = run_simulation(SchemeConfig(scheme, 0.125, 0.5), disc4.problem, disc4).final
    b = run_simulation(SchemeConfig(scheme, 0.125, 0.5), disc4.problem).final
    assert np.array_equal(a.u, b.u) and np.array_equal(a.p, b.p)


def test_krylov_matches_direct(disc4):
    a = run_simulation(SchemeConfig("parallel_split", 0.125, 0.5), disc4.problem, disc4).final
    b = run_simulation(SchemeConfig("parallel_split", 0.125, 0.5, solver="krylov", tol=1e-12),
                       disc4.problem, disc4).final
    d = field_difference(b, a, disc4)
    assert max(d.values()) < 1e-8


# --- Dirichlet data and time-dependent boundary values ----------------------


@pytest.mark.parametrize("scheme", SCHEMES)
def test_dirichlet_values_exact(scheme):
    mesh = BrainGeometry(n_r=2, n_t=12).mesh()
    prob = brain_problem(mesh)
    disc = Discretization(prob, 2, 1)
    dt = 0.1
    traj = run_simulation(SchemeConfig(scheme, dt, 0.3, snapshot_times=(0.1, 0.2)), prob, disc)
    for s in [traj.final, *traj.snapshots.values()]:
        du, vu = disc.dirichlet_u(s.t)
        assert np.array_equal(s.u[du], vu)
        for j in range(4):
            d, v = disc.dirichlet_p(j, s.t)
            assert np.array_equal(s.p[j][d], v)


# --- consistency -----------------------------------------------------------


def test_sequential_matches_monolithic_first_order(disc8):
    diffs = []
    for dt in (1 / 32, 1 / 64, 1 / 128):
        out = {}
        for scheme in ("monolithic", "sequential"):
            it = Integrator(disc8, SchemeConfig(scheme, dt, 2 * dt))
            s, _ = it.step(disc8.initial_state())
            out[scheme], _ = it.step(s)
        diffs.append(field_difference(out["sequential"], out["monolithic"], disc8))
    for key in diffs[0]:
        for a, b in zip(diffs, diffs[1:]):
            assert a[key] / b[key] == pytest.approx(2.0, abs=0.3), key


def test_trajectory_timing(disc4):
    traj = run_simulation(SchemeConfig("parallel_split", 0.125, 0.5, record_energy=True), disc4.problem, disc4)
    tm = traj.timing()
    assert set(tm) == {"setup", "assembly", "solve", "total"}
    assert tm["total"] >= tm["assembly"] + tm["solve"] - 1e-3
    assert len(traj.energies) == 5


def test_state_copy_independent():
    s = SimulationState(1, 0.1, np.zeros(2), np.zeros(1), np.zeros((1, 1)), np.zeros(1), np.zeros((1, 1)))
    c = s.copy()
    c.u[0] = 1.0
    c.xi_prev[0] = 1.0
    assert s.u[0] == 0.0 and s.xi_prev[0] == 0.0
