"""Four-network brain tissue model on an annular stand-in geometry.

The outer circle plays the skull (marker 1, clamped displacement) and the
inner circle the ventricular wall (marker 2, total traction
``-(alpha . p) n``). Lengths are in millimetres, pressures in pascal; the
physiological boundary data are quoted in mmHg and converted on load
construction.

Networks: 1 extracellular / paravascular, 2 arterial, 3 venous,
4 capillary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import LoadSet, MpetParameters
from .mesh import INNER, OUTER, Mesh, annulus_mesh
from .schemes import MpetProblem

MMHG = 133.32  # Pa per mmHg
TRANSMANTLE = 0.012  # extra ventricular amplitude of p_1 [mmHg]
INITIAL_MMHG = (5.0, 70.0, 6.0, 38.0)


def brain_parameters(L_multiplier: float = 1.0) -> MpetParameters:
    """Tissue and network coefficients (E = 1500 Pa, nu = 0.4999)."""
    s = np.zeros((4, 4))
    for j, i in [(2, 4), (4, 3), (4, 1), (1, 3)]:
        s[j - 1, i - 1] = s[i - 1, j - 1] = 1.0e-6
    return MpetParameters.from_young(
        1500.0,
        0.4999,
        c=[3.9e-4, 2.9e-4, 1.5e-5, 2.9e-4],
        alpha=[0.49, 0.25, 0.01, 0.25],
        kappa=[1.57e-5, 3.75e-2, 3.75e-2, 3.75e-2],
        s=s,
        L_multiplier=L_multiplier,
    )


def _const(value):
    return lambda x, y, t: np.full(np.shape(x), value)


def _pulse(mean, amplitude):
    return lambda x, y, t: np.full(np.shape(x), MMHG * (mean + amplitude * np.sin(2.0 * np.pi * t)))


def brain_loads() -> LoadSet:
    zero2 = lambda x, y, t: (0.0, 0.0)  # noqa: E731
    return LoadSet(
        num_networks=4,
        dirichlet_u={OUTER: zero2},
        pressure_traction=[INNER],
        dirichlet_p=[
            {OUTER: _pulse(5.0, 2.0), INNER: _pulse(5.0, 2.0 + TRANSMANTLE)},
            {OUTER: _pulse(70.0, 10.0)},  # no arterial flux through the ventricles
            {OUTER: _const(6.0 * MMHG), INNER: _const(6.0 * MMHG)},
            {},  # capillaries: no flux on either wall
        ],
    )


@dataclass
class BrainGeometry:
    r_in: float = 30.0
    r_out: float = 70.0
    n_r: int = 8
    n_t: int = 64

    def mesh(self) -> Mesh:
        return annulus_mesh(self.r_in, self.r_out, self.n_r, self.n_t)


def brain_problem(mesh: Mesh | None = None, params: MpetParameters | None = None) -> MpetProblem:
    mesh = BrainGeometry().mesh() if mesh is None else mesh
    params = brain_parameters() if params is None else params
    p0 = [_const(v * MMHG) for v in INITIAL_MMHG]
    return MpetProblem(mesh, params, brain_loads(), None, p0, name="brain")
