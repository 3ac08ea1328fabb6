"""Error norms, gradient recovery at the interface and convergence slopes."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .affine import ALL_OFFSETS, CONST, NSLOTS

CSV_COLUMNS = ("N", "h", "err_u_inf", "err_grad_inf", "iterations", "assemble_seconds", "solve_seconds")

_OFFSETS = np.array(ALL_OFFSETS, dtype=int)


def local_values(grid, u, i) -> np.ndarray:
    """Slot vector of ``u`` around node ``i`` (constant slot set to one, outside-box slots zero)."""
    u = np.asarray(u).reshape(grid.shape)
    idx = np.asarray(i, dtype=int) + _OFFSETS
    ok = np.all((idx >= 0) & (idx <= grid.N), axis=1)
    out = np.zeros(NSLOTS)
    out[np.flatnonzero(ok)] = u[tuple(idx[ok].T)]
    out[CONST] = 1.0
    return out


def interface_gradient(record, u_local) -> tuple[np.ndarray, np.ndarray]:
    """One-sided gradients ``(grad_minus, grad_plus)`` at a crossing.

    The base point's side comes from Taylor extension of its derivative
    forms; the other side adds or removes the recovered gradient jump.
    """
    own = record.grad_own @ u_local
    jump = record.grad_jump @ u_local
    if record.side < 0:
        return own, own + jump
    return own - jump, own


def gradient_jump_normal(intersection, gradients) -> float:
    minus, plus = gradients
    return float(np.dot(plus - minus, intersection.geometry.normal))


@dataclass
class GradientRecord:
    location: np.ndarray
    normal: np.ndarray
    grad_minus: np.ndarray
    grad_plus: np.ndarray
    error: float


@dataclass
class ErrorReport:
    err_u_inf: float
    err_grad_inf: float
    gradients: list = field(default_factory=list)

    def __post_init__(self):
        if self.err_u_inf < 0 or self.err_grad_inf < 0:
            raise ValueError("error norms must be nonnegative")


def interface_gradients(assembly, u) -> list:
    """Gradients at every crossing, each taken from its inside endpoint.

    Returns a list of ``(record, grad_minus, grad_plus)``.
    """
    out = []
    grid = assembly.grid
    for lin in sorted(assembly.forms):
        forms = assembly.forms[lin]
        if not forms.crossings:
            continue
        rec0 = next(iter(forms.crossings.values()))
        if rec0.side > 0:
            continue
        ul = local_values(grid, u, grid.multi(lin))
        for key in sorted(forms.crossings):
            rec = forms.crossings[key]
            gm, gp = interface_gradient(rec, ul)
            out.append((rec, gm, gp))
    return out


def error_report(assembly, u, problem) -> ErrorReport:
    """Sup-norm errors of ``u`` at all nodes and of both one-sided gradients at all crossings."""
    grid = assembly.grid
    nodes = grid.nodes().reshape(-1, 3)
    exact = problem.by_sign(problem.exact, assembly.signs.sign.reshape(-1), nodes)
    err_u = float(np.max(np.abs(np.asarray(u).reshape(-1) - exact)))
    recs = interface_gradients(assembly, u)
    grads = []
    if recs:
        locs = np.array([r.intersection.location for r, _, _ in recs])
        em = problem.exact_grad(0, locs)
        ep = problem.exact_grad(1, locs)
        for n, (rec, gm, gp) in enumerate(recs):
            e = max(np.max(np.abs(gm - em[n])), np.max(np.abs(gp - ep[n])))
            grads.append(GradientRecord(rec.intersection.location, rec.intersection.geometry.normal, gm, gp, float(e)))
    err_g = max((g.error for g in grads), default=0.0)
    return ErrorReport(err_u, err_g, grads)


def fit_slope(points) -> float:
    """Least-squares slope of ``log(error)`` against ``log(N)``."""
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or len(pts) < 3:
        raise ValueError("need at least three (N, error) points")
    if np.any(pts[:, 1] <= 0) or np.any(pts[:, 0] <= 0):
        raise ValueError("N and error values must be positive")
    return float(np.polyfit(np.log(pts[:, 0]), np.log(pts[:, 1]), 1)[0])


def write_convergence_csv(path, rows) -> None:
    """``rows`` are mappings with at least the keys in :data:`CSV_COLUMNS`."""
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow(r)
