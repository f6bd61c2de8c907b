"""Finite element solver for multiple-network poroelasticity (MPET).

The system is written in displacement / total pressure / network pressure
form and discretized with Taylor-Hood elements for ``(u, xi)`` and Lagrange
elements for the pressures. Three time integrators are provided: a fully
coupled backward-Euler scheme, a sequential decoupling and a stabilized
parallel splitting whose two subproblems can be solved concurrently.
"""

from .assembly import LoadSet, MpetParameters, lame_from_young
from .mesh import Mesh, annulus_mesh, read_mesh, unit_square_mesh, write_mesh
from .schemes import (
    Discretization,
    MpetProblem,
    SchemeConfig,
    SimulationState,
    run_simulation,
    stabilization_coefficient,
)

__all__ = [
    "Discretization",
    "LoadSet",
    "Mesh",
    "MpetParameters",
    "MpetProblem",
    "SchemeConfig",
    "SimulationState",
    "annulus_mesh",
    "lame_from_young",
    "read_mesh",
    "run_simulation",
    "stabilization_coefficient",
    "unit_square_mesh",
    "write_mesh",
]

__version__ = "0.1.0"
