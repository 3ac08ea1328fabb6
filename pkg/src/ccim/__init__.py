"""Compact coupling interface method for 3-D elliptic interface problems.

Solves ``-div(eps grad u) + a u = f`` on ``[-1, 1]^3`` with ``eps``, ``a``,
``f`` discontinuous across an implicit surface ``phi = 0`` and jump
conditions ``[u] = tau``, ``[eps du/dn] = sigma``.
"""

__version__ = "0.1.0"

from .coupling import Assembly, assemble_system, build_coupling
from .estimator import CCIMSolver, RunResult, solve
from .levelset import catalog_surface, molecular_surface, parse_pqr
from .mesh import Grid, build_grid
from .problems import Problem, preset_problem
from .sparse import bicgstab, ilu0

__all__ = [
    "Assembly",
    "CCIMSolver",
    "Grid",
    "Problem",
    "RunResult",
    "assemble_system",
    "bicgstab",
    "build_coupling",
    "build_grid",
    "catalog_surface",
    "ilu0",
    "molecular_surface",
    "parse_pqr",
    "preset_problem",
    "solve",
]
