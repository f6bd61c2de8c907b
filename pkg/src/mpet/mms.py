"""Manufactured two-network solution on the unit square.

Exact fields::

    u1 = e^{-t} (sin(2 pi y)(cos(2 pi x) - 1) + sin(pi x) sin(pi y) / (mu + lam))
    u2 = e^{-t} (sin(2 pi x)(1 - cos(2 pi y)) + sin(pi x) sin(pi y) / (mu + lam))
    p_j = e^{-j t} sin(pi x) sin(pi y)

Body force and sources are hand-derived closed forms; :func:`residual_check`
certifies them against central differences evaluated in extended precision
(the ``lam * div u`` term loses every digit in double precision when
``lam ~ 1e8``).
"""

from __future__ import annotations

from dataclasses import dataclass

import mpmath
import numpy as np

from .assembly import LoadSet, MpetParameters
from .mesh import OUTER

PI = np.pi


def _params(E, nu, c, kappa, s, alpha=1.0, A=2):
    return MpetParameters.from_young(
        E, nu, c=np.full(A, c), alpha=np.full(A, alpha), kappa=np.full(A, kappa),
        s=s * (1.0 - np.eye(A)),
    )


CASES = {
    # spatial convergence, moderate parameters
    "case1": dict(E=1.0, nu=0.3, c=1.0, kappa=1.0, s=0.01),
    # nearly incompressible, vanishing storage and permeability
    "case2": dict(E=1.0, nu=0.499999999, c=1e-7, kappa=1e-6, s=0.01),
    # time-refinement study
    "time": dict(E=1.0, nu=0.4, c=1e-7, kappa=1e-7, s=0.1),
}


def case_parameters(name: str) -> MpetParameters:
    try:
        return _params(**CASES[name])
    except KeyError:
        raise ValueError(f"unknown manufactured case {name!r}") from None


@dataclass
class ManufacturedCase:
    params: MpetParameters
    zero: bool = False  # trivial solution with zero data

    @classmethod
    def named(cls, name: str) -> "ManufacturedCase":
        return cls(case_parameters(name))

    @property
    def num_networks(self) -> int:
        return self.params.num_networks

    # --- exact fields (numpy) ------------------------------------------

    def _g(self):
        return 1.0 / (self.params.mu + self.params.lam)

    def u(self, x, y, t):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        if self.zero:
            return np.zeros((2,) + x.shape)
        e = np.exp(-t)
        phi = np.sin(PI * x) * np.sin(PI * y)
        g = self._g()
        u1 = np.sin(2 * PI * y) * (np.cos(2 * PI * x) - 1.0) + g * phi
        u2 = np.sin(2 * PI * x) * (1.0 - np.cos(2 * PI * y)) + g * phi
        return e * np.stack([u1, u2])

    def grad_u(self, x, y, t):
        """``(2, 2, ...)`` with ``[i, j] = d u_i / d x_j``."""
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        if self.zero:
            return np.zeros((2, 2) + x.shape)
        e = np.exp(-t)
        g = self._g()
        sx, cx, sy, cy = np.sin(PI * x), np.cos(PI * x), np.sin(PI * y), np.cos(PI * y)
        s2x, c2x = np.sin(2 * PI * x), np.cos(2 * PI * x)
        s2y, c2y = np.sin(2 * PI * y), np.cos(2 * PI * y)
        d1x = -2 * PI * s2y * s2x + g * PI * cx * sy
        d1y = 2 * PI * c2y * (c2x - 1.0) + g * PI * sx * cy
        d2x = 2 * PI * c2x * (1.0 - c2y) + g * PI * cx * sy
        d2y = 2 * PI * s2x * s2y + g * PI * sx * cy
        return e * np.array([[d1x, d1y], [d2x, d2y]])

    def div_u(self, x, y, t):
        if self.zero:
            return np.zeros(np.broadcast(x, y).shape)
        return np.exp(-t) * self._g() * PI * np.sin(PI * (np.asarray(x) + np.asarray(y)))

    def p(self, j, x, y, t):
        """Pressure of network ``j`` (0-based)."""
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        if self.zero:
            return np.zeros(x.shape)
        return np.exp(-(j + 1) * t) * np.sin(PI * x) * np.sin(PI * y)

    def grad_p(self, j, x, y, t):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        if self.zero:
            return np.zeros((2,) + x.shape)
        e = np.exp(-(j + 1) * t)
        return e * PI * np.stack(
            [np.cos(PI * x) * np.sin(PI * y), np.sin(PI * x) * np.cos(PI * y)]
        )

    def xi(self, x, y, t):
        a = self.params.alpha
        total = sum(a[j] * self.p(j, x, y, t) for j in range(self.num_networks))
        return total - self.params.lam * self.div_u(x, y, t)

    def grad_xi(self, x, y, t):
        a = self.params.alpha
        total = sum(a[j] * self.grad_p(j, x, y, t) for j in range(self.num_networks))
        if self.zero:
            return total
        c = self.params.lam * self._g() * np.exp(-t) * PI**2
        w = c * np.cos(PI * (np.asarray(x) + np.asarray(y)))
        return total - np.stack([w, w])

    def exact_fields(self, point, t):
        """``(u, xi, [p_1, ..., p_A])`` at one point."""
        x, y = point
        u = self.u(x, y, t)
        return u, float(self.xi(x, y, t)), [float(self.p(j, x, y, t)) for j in range(self.num_networks)]

    # --- forcing (numpy closed forms) ----------------------------------

    def body_force(self, x, y, t):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        if self.zero:
            return np.zeros((2,) + x.shape)
        prm = self.params
        mu = prm.mu
        e = np.exp(-t)
        g = self._g()
        phi = np.sin(PI * x) * np.sin(PI * y)
        s2x, c2x = np.sin(2 * PI * x), np.cos(2 * PI * x)
        s2y, c2y = np.sin(2 * PI * y), np.cos(2 * PI * y)
        lap1 = -4 * PI**2 * s2y * (2 * c2x - 1.0) - 2 * g * PI**2 * phi
        lap2 = 4 * PI**2 * s2x * (2 * c2y - 1.0) - 2 * g * PI**2 * phi
        graddiv = (mu + prm.lam) * g * PI**2 * np.cos(PI * (x + y))
        f = -mu * e * np.stack([lap1, lap2]) - e * np.stack([graddiv, graddiv])
        for j in range(self.num_networks):
            f = f + prm.alpha[j] * self.grad_p(j, x, y, t)
        return f

    def source(self, j, x, y, t):
        if self.zero:
            return np.zeros(np.broadcast(x, y).shape)
        prm = self.params
        pj = self.p(j, x, y, t)
        out = (
            -(j + 1) * prm.c[j] * pj
            - prm.alpha[j] * self.div_u(x, y, t)
            + 2 * PI**2 * prm.kappa[j] * pj
        )
        for i in range(self.num_networks):
            if prm.s[j, i]:
                out = out + prm.s[j, i] * (pj - self.p(i, x, y, t))
        return out

    def forcing_fields(self, point, t):
        """``(f, [q_1, ..., q_A])`` at one point."""
        x, y = point
        f = self.body_force(x, y, t)
        return f, [float(self.source(j, x, y, t)) for j in range(self.num_networks)]

    def loads(self) -> LoadSet:
        """Forcing with homogeneous Dirichlet data on the whole boundary."""
        A = self.num_networks
        zero2 = lambda x, y, t: (0.0, 0.0)  # noqa: E731
        zero = lambda x, y, t: 0.0  # noqa: E731
        return LoadSet(
            num_networks=A,
            body_force=self.body_force,
            sources=[(lambda x, y, t, j=j: self.source(j, x, y, t)) for j in range(A)],
            dirichlet_u={OUTER: zero2},
            dirichlet_p=[{OUTER: zero} for _ in range(A)],
        )

    def initial_u(self, x, y, t=0.0):
        return self.u(x, y, t)

    def initial_p(self, j):
        return lambda x, y, t=0.0: self.p(j, x, y, t)

    def problem(self, mesh, name: str = "mms"):
        """Boundary-value problem on ``mesh`` started from the exact fields."""
        from .schemes import MpetProblem

        p0 = [self.initial_p(j) for j in range(self.num_networks)]
        return MpetProblem(mesh, self.params, self.loads(), self.initial_u, p0, name=name)


# --- finite-difference oracle (extended precision) ---------------------------


def _mp_fields(case: ManufacturedCase):
    prm = case.params
    mu = mpmath.mpf(prm.mu)
    lam = mpmath.mpf(prm.lam)
    g = 1 / (mu + lam)
    pi = mpmath.pi
    sin, cos, exp = mpmath.sin, mpmath.cos, mpmath.exp

    def u(x, y, t):
        if case.zero:
            return (mpmath.mpf(0), mpmath.mpf(0))
        phi = sin(pi * x) * sin(pi * y)
        e = exp(-t)
        return (
            e * (sin(2 * pi * y) * (cos(2 * pi * x) - 1) + g * phi),
            e * (sin(2 * pi * x) * (1 - cos(2 * pi * y)) + g * phi),
        )

    def p(j, x, y, t):
        if case.zero:
            return mpmath.mpf(0)
        return exp(-(j + 1) * t) * sin(pi * x) * sin(pi * y)

    return mu, lam, u, p


def residual_check(case: ManufacturedCase, point, t: float, spacing: float = 1e-4, dps: int = 40):
    """PDE residuals of the exact fields against the closed-form forcing.

    Every derivative is a central difference of width ``spacing`` taken in
    ``dps``-digit arithmetic. Returns ``(momentum (2,), [mass_j])``.
    """
    prm = case.params
    A = case.num_networks
    with mpmath.workdps(dps):
        mu, lam, u, p = _mp_fields(case)
        h = mpmath.mpf(spacing)
        x0, y0, t0 = mpmath.mpf(point[0]), mpmath.mpf(point[1]), mpmath.mpf(t)

        def grad_u(x, y):
            ux_p, ux_m = u(x + h, y, t0), u(x - h, y, t0)
            uy_p, uy_m = u(x, y + h, t0), u(x, y - h, t0)
            return [[(ux_p[i] - ux_m[i]) / (2 * h), (uy_p[i] - uy_m[i]) / (2 * h)] for i in range(2)]

        def sigma(x, y):
            G = grad_u(x, y)
            div = G[0][0] + G[1][1]
            s12 = mu * (G[0][1] + G[1][0])
            return [[2 * mu * G[0][0] + lam * div, s12], [s12, 2 * mu * G[1][1] + lam * div]]

        sxp, sxm = sigma(x0 + h, y0), sigma(x0 - h, y0)
        syp, sym = sigma(x0, y0 + h), sigma(x0, y0 - h)
        div_sigma = [
            (sxp[i][0] - sxm[i][0]) / (2 * h) + (syp[i][1] - sym[i][1]) / (2 * h) for i in range(2)
        ]
        grad_alpha_p = [mpmath.mpf(0), mpmath.mpf(0)]
        for j in range(A):
            a = mpmath.mpf(prm.alpha[j])
            grad_alpha_p[0] += a * (p(j, x0 + h, y0, t0) - p(j, x0 - h, y0, t0)) / (2 * h)
            grad_alpha_p[1] += a * (p(j, x0, y0 + h, t0) - p(j, x0, y0 - h, t0)) / (2 * h)
        f = case.body_force(float(point[0]), float(point[1]), float(t))
        momentum = np.array(
            [float(-div_sigma[i] + grad_alpha_p[i] - mpmath.mpf(f[i])) for i in range(2)]
        )

        def div_u(tt):
            ux_p, ux_m = u(x0 + h, y0, tt), u(x0 - h, y0, tt)
            uy_p, uy_m = u(x0, y0 + h, tt), u(x0, y0 - h, tt)
            return (ux_p[0] - ux_m[0]) / (2 * h) + (uy_p[1] - uy_m[1]) / (2 * h)

        ddiv_dt = (div_u(t0 + h) - div_u(t0 - h)) / (2 * h)
        mass = []
        for j in range(A):
            c = mpmath.mpf(prm.c[j])
            a = mpmath.mpf(prm.alpha[j])
            k = mpmath.mpf(prm.kappa[j])
            dp_dt = (p(j, x0, y0, t0 + h) - p(j, x0, y0, t0 - h)) / (2 * h)
            lap = (
                p(j, x0 + h, y0, t0) + p(j, x0 - h, y0, t0) + p(j, x0, y0 + h, t0)
                + p(j, x0, y0 - h, t0) - 4 * p(j, x0, y0, t0)
            ) / h**2
            transfer = sum(
                mpmath.mpf(prm.s[j, i]) * (p(j, x0, y0, t0) - p(i, x0, y0, t0)) for i in range(A)
            )
            q = case.source(j, float(point[0]), float(point[1]), float(t))
            mass.append(float(c * dp_dt + a * ddiv_dt - k * lap + transfer - mpmath.mpf(float(q))))
    return momentum, mass
