"""Error norms, convergence rates, the discrete energy and scheme comparisons."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .fem import FunctionSpace, MAX_QUADRATURE_ORDER, lagrange_basis, sample, triangle_quadrature

FIELD_EPS = 1e-14


def _at_quadrature(space: FunctionSpace, coeffs, order):
    rule = triangle_quadrature(order)
    phi, dref = lagrange_basis(space.degree, rule.points)
    w = rule.weights[None, :] * np.abs(space.geometry.det)[:, None]
    xq = space.geometry.map_points(rule.points)
    local = np.asarray(coeffs)[space.cell_dofs]  # (T, nloc*c)
    T = len(local)
    local = local.reshape(T, -1, space.components)
    return rule, phi, dref, w, xq, local


def l2_error(space: FunctionSpace, coeffs, exact, t: float = 0.0, order: int = MAX_QUADRATURE_ORDER) -> float:
    """``|exact - u_h|_{L2}``; ``exact(x, y, t)`` (``None`` means zero)."""
    _, phi, _, w, xq, local = _at_quadrature(space, coeffs, order)
    uh = np.einsum("qa,tac->ctq", phi, local)
    if exact is not None:
        uh = uh - sample(exact, xq[..., 0], xq[..., 1], t, space.components)
    return float(np.sqrt(np.einsum("tq,ctq->", w, uh**2)))


def h1_seminorm_error(space: FunctionSpace, coeffs, exact_grad, t: float = 0.0,
                      order: int = MAX_QUADRATURE_ORDER) -> float:
    """``|grad(exact - u_h)|_{L2}``.

    ``exact_grad(x, y, t)`` returns shape ``(2, ...)`` for scalars and
    ``(2, 2, ...)`` (component, direction) for vectors.
    """
    _, _, dref, w, xq, local = _at_quadrature(space, coeffs, order)
    G = space.geometry.physical_grads(dref)  # (T, q, a, 2)
    gh = np.einsum("tqai,tac->citq", G, local)  # (c, dir, T, q)
    if exact_grad is not None:
        ge = np.asarray(exact_grad(xq[..., 0], xq[..., 1], t), dtype=float)
        gh = gh - ge.reshape(gh.shape)
    return float(np.sqrt(np.einsum("tq,citq->", w, gh**2)))


def eoc(errors, steps) -> np.ndarray:
    """Rates ``log(e_i / e_{i+1}) / log(h_i / h_{i+1})``."""
    e = np.asarray(errors, dtype=float)
    h = np.asarray(steps, dtype=float)
    return np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:])


@dataclass
class ErrorReport:
    h: float
    dt: float
    u_l2: float
    u_h1: float
    xi_l2: float
    xi_h1: float
    p_l2: float
    p_h1: float

    def as_dict(self):
        return asdict(self)


ERROR_FIELDS = ("u_l2", "u_h1", "xi_l2", "xi_h1", "p_l2", "p_h1")


def mms_errors(disc, state, case, h=None) -> ErrorReport:
    """Errors of a state against a :class:`~mpet.mms.ManufacturedCase`.

    Pressure norms combine all networks: ``sqrt(sum_j |p_j - p_jh|^2)``.
    """
    t = state.t
    pl2 = ph1 = 0.0
    for j in range(disc.A):
        pl2 += l2_error(disc.Q, state.p[j], lambda x, y, tt, j=j: case.p(j, x, y, tt), t) ** 2
        ph1 += h1_seminorm_error(disc.Q, state.p[j], lambda x, y, tt, j=j: case.grad_p(j, x, y, tt), t) ** 2
    return ErrorReport(
        h=disc.problem.mesh.max_diameter() / np.sqrt(2) if h is None else h,
        dt=state.t / max(state.n, 1),
        u_l2=l2_error(disc.V, state.u, case.u, t),
        u_h1=h1_seminorm_error(disc.V, state.u, case.grad_u, t),
        xi_l2=l2_error(disc.W, state.xi, case.xi, t),
        xi_h1=h1_seminorm_error(disc.W, state.xi, case.grad_xi, t),
        p_l2=float(np.sqrt(pl2)),
        p_h1=float(np.sqrt(ph1)),
    )


def energy_proxy(disc, state) -> float:
    """``2 mu |eps(u)|^2 + sum_j c_j |p_j|^2 + |alpha.p - xi|^2 / lam``."""
    prm = disc.params
    ap = prm.alpha @ state.p
    u = state.u
    el = u @ (disc.K_u @ u)
    store = sum(prm.c[j] * (state.p[j] @ (disc.M_p @ state.p[j])) for j in range(disc.A))
    mix = (
        state.xi @ (disc.M_w @ state.xi)
        - 2.0 * state.xi @ (disc.C_wp @ ap)
        + ap @ (disc.M_p @ ap)
    )
    return float(el + store + max(mix, 0.0) / prm.lam)


def first_step_reference(disc, state0, state1, stabilizer: float = 0.0) -> float:
    """Energy proxy after the coupled first step plus its increment terms.

    ``proxy(1) + L |alpha.(p^1 - p^0)|^2 + |xi^1 - xi^0|^2 / lam`` keeps
    the first-step increments that the split scheme carries into step 2
    through its lagged terms; the bare ``proxy(1)`` can be many orders of
    magnitude smaller when the coupled first step relaxes a rough start. It
    is a diagnostic reference, not a proven bound.
    """
    prm = disc.params
    dp = prm.alpha @ (state1.p - state0.p)
    dx = state1.xi - state0.xi
    return float(
        energy_proxy(disc, state1)
        + stabilizer * (dp @ (disc.M_p @ dp))
        + (dx @ (disc.M_w @ dx)) / prm.lam
    )


def discrete_energy(disc, state, t: float) -> float:
    """Half the energy proxy minus the work of the body force and tractions."""
    work = 0.0
    if disc.loads.body_force is not None or disc.loads.traction:
        F = disc.displacement_load(t)
        work = float(F @ state.u)
    return 0.5 * energy_proxy(disc, state) - work


def _norm(M, v):
    return float(np.sqrt(max(v @ (M @ v), 0.0)))


def field_difference(state_a, state_b, disc, eps: float = FIELD_EPS) -> dict:
    """Relative L2 distance ``|a - b| / max(|b|, eps)`` per field."""
    Mu = disc._mass_u if hasattr(disc, "_mass_u") else None
    if Mu is None:
        from .assembly import assemble_mass

        Mu = assemble_mass(disc.V)
        disc._mass_u = Mu
    out = {
        "u": _norm(Mu, state_a.u - state_b.u) / max(_norm(Mu, state_b.u), eps),
        "xi": _norm(disc.M_w, state_a.xi - state_b.xi) / max(_norm(disc.M_w, state_b.xi), eps),
    }
    for j in range(disc.A):
        d = state_a.p[j] - state_b.p[j]
        out[f"p{j + 1}"] = _norm(disc.M_p, d) / max(_norm(disc.M_p, state_b.p[j]), eps)
    return out
