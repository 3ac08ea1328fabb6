"""Estimator-style front end: configure once, ``fit`` a problem, read results."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .coupling import assemble_system
from .levelset import Surface, catalog_surface
from .mesh import build_grid
from .postproc import error_report
from .problems import Problem, preset_problem
from .sparse import bicgstab


@dataclass
class RunResult:
    N: int
    h: float
    solution: np.ndarray
    assembly: object
    solve_report: object
    errors: object
    assemble_seconds: float
    solve_seconds: float

    def row(self) -> dict:
        return {
            "N": self.N,
            "h": self.h,
            "err_u_inf": self.errors.err_u_inf,
            "err_grad_inf": self.errors.err_grad_inf,
            "iterations": self.solve_report.iterations,
            "assemble_seconds": round(self.assemble_seconds, 3),
            "solve_seconds": round(self.solve_seconds, 3),
        }


def solve(N: int, surface, problem, *, tol: float = 1e-9, threads: int = 1, max_iter: int = 10000) -> RunResult:
    """Assemble, solve and measure errors for one grid size."""
    grid = build_grid(N)
    t0 = time.perf_counter()
    asm = assemble_system(grid, surface, problem, threads=threads)
    t1 = time.perf_counter()
    u, report = bicgstab(asm.matrix, asm.rhs, tol=tol, max_iter=max_iter)
    t2 = time.perf_counter()
    return RunResult(N, grid.h, u.reshape(grid.shape), asm, report, error_report(asm, u, problem), t1 - t0, t2 - t1)


class CCIMSolver(BaseEstimator):
    """Compact coupling interface solver for ``-div(eps grad u) + a u = f``.

    Parameters
    ----------
    N : int
        Grid subintervals per axis on ``[-1, 1]^3``.
    surface : str or Surface
        Catalog name or a surface object.
    tol : float
        Relative residual for BiCGSTAB.
    threads : int
        Worker threads for interface-point assembly.

    Attributes
    ----------
    solution_ : ndarray of shape (N+1, N+1, N+1)
    errors_ : ErrorReport
    solve_report_ : SolveReport
    assembly_ : Assembly
    """

    def __init__(self, N: int = 40, surface="ellipsoid", tol: float = 1e-9, threads: int = 1):
        self.N = N
        self.surface = surface
        self.tol = tol
        self.threads = threads

    def _surface(self) -> Surface:
        return catalog_surface(self.surface) if isinstance(self.surface, str) else self.surface

    def fit(self, problem="example1", y=None):
        """Solve ``problem`` (preset name or :class:`Problem`); ``y`` is ignored."""
        prob = preset_problem(problem) if isinstance(problem, str) else problem
        if not isinstance(prob, Problem):
            raise TypeError("problem must be a preset name or a Problem")
        res = solve(self.N, self._surface(), prob, tol=self.tol, threads=self.threads)
        self.result_ = res
        self.solution_ = res.solution
        self.errors_ = res.errors
        self.solve_report_ = res.solve_report
        self.assembly_ = res.assembly
        return self

    def predict(self, X):
        """Nodal solution at grid indices ``X`` (shape ``(m, 3)``)."""
        X = np.asarray(X, dtype=int).reshape(-1, 3)
        return self.solution_[tuple(X.T)]

    def score(self, X=None, y=None) -> float:
        """Negative sup-norm solution error (higher is better)."""
        return -self.errors_.err_u_inf
