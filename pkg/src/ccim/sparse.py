"""Sparse storage and the preconditioned BiCGSTAB solver.

Storage is scipy's CSR format in canonical form (sorted, no duplicates).
The matrix-vector product and the ILU(0) kernels are compiled with numba;
each row is summed sequentially so results do not depend on thread count.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numba
import numpy as np
import scipy.io
import scipy.sparse as sps

logger = logging.getLogger(__name__)

# the bundled TBB is too old for numba; skip it instead of warning on every run
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

BREAKDOWN = 1e-30
PIVOT_SHIFT = 1e-12


class NonConvergenceError(RuntimeError):
    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


@dataclass
class SolveReport:
    iterations: int
    residual: float
    converged: bool
    seconds: float
    restarts: int = 0


def as_csr(A) -> sps.csr_matrix:
    """Canonical CSR copy of ``A`` (sorted column indices, duplicates summed)."""
    A = sps.csr_matrix(A, dtype=float, copy=True)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got {A.shape}")
    A.sum_duplicates()
    A.sort_indices()
    return A


@numba.njit(parallel=True, cache=True)
def _matvec(indptr, indices, data, x, out):
    for r in numba.prange(len(indptr) - 1):
        acc = 0.0
        for j in range(indptr[r], indptr[r + 1]):
            acc += data[j] * x[indices[j]]
        out[r] = acc


def matvec(A: sps.csr_matrix, x: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    if out is None:
        out = np.empty(A.shape[0])
    _matvec(A.indptr, A.indices, A.data, np.ascontiguousarray(x, dtype=float), out)
    return out


@numba.njit(cache=True)
def _ilu0_factor(indptr, indices, data, diag, shift_scale):
    n = len(indptr) - 1
    lu = data.copy()
    shifted = 0
    pos = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        for j in range(indptr[i], indptr[i + 1]):
            pos[indices[j]] = j
        for jj in range(indptr[i], diag[i]):
            k = indices[jj]
            lu[jj] /= lu[diag[k]]
            mult = lu[jj]
            for kk in range(diag[k] + 1, indptr[k + 1]):
                p = pos[indices[kk]]
                if p >= 0:
                    lu[p] -= mult * lu[kk]
        if lu[diag[i]] == 0.0:
            lu[diag[i]] = shift_scale[i]
            shifted += 1
        for j in range(indptr[i], indptr[i + 1]):
            pos[indices[j]] = -1
    return lu, shifted


@numba.njit(cache=True)
def _ilu0_solve(indptr, indices, lu, diag, b, out):
    n = len(indptr) - 1
    for i in range(n):
        acc = b[i]
        for j in range(indptr[i], diag[i]):
            acc -= lu[j] * out[indices[j]]
        out[i] = acc
    for i in range(n - 1, -1, -1):
        acc = out[i]
        for j in range(diag[i] + 1, indptr[i + 1]):
            acc -= lu[j] * out[indices[j]]
        out[i] = acc / lu[diag[i]]


class ILU0:
    """Incomplete LU with zero fill-in on the pattern of ``A``."""

    def __init__(self, A):
        A = as_csr(A)
        n = A.shape[0]
        diag = np.empty(n, dtype=np.int64)
        for i in range(n):
            lo, hi = A.indptr[i], A.indptr[i + 1]
            hit = np.searchsorted(A.indices[lo:hi], i)
            if hit == hi - lo or A.indices[lo + hit] != i:
                raise ValueError(f"row {i} has no diagonal entry")
            diag[i] = lo + hit
        row_norm = np.sqrt(np.add.reduceat(A.data**2, A.indptr[:-1])) if A.nnz else np.zeros(n)
        shift = PIVOT_SHIFT * np.where(row_norm > 0, row_norm, 1.0)
        self.indptr, self.indices, self.diag = A.indptr, A.indices, diag
        self.lu, shifted = _ilu0_factor(A.indptr, A.indices, A.data, diag, shift)
        if shifted:
            logger.warning("ILU(0): %d zero pivots shifted by %.0e*|row|", shifted, PIVOT_SHIFT)
        self.shape = A.shape

    def solve(self, b: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        if out is None:
            out = np.empty(self.shape[0])
        _ilu0_solve(self.indptr, self.indices, self.lu, self.diag, np.ascontiguousarray(b, dtype=float), out)
        return out

    __call__ = solve


def ilu0(A) -> ILU0:
    return ILU0(A)


class _Breakdown(Exception):
    pass


def _bicgstab_pass(A, b, x, precond, tol, max_iter, bnorm, start_iter):
    r = b - matvec(A, x)
    rhat = r.copy()
    rho = alpha = omega = 1.0
    v = np.zeros_like(b)
    p = np.zeros_like(b)
    it = start_iter
    res = np.linalg.norm(r) / bnorm
    while it < max_iter:
        if res <= tol:
            return x, it, res
        it += 1
        rho_new = rhat @ r
        if abs(rho_new) < BREAKDOWN * np.linalg.norm(rhat) * np.linalg.norm(r):
            raise _Breakdown(x, it, res)
        beta = (rho_new / rho) * (alpha / omega)
        p = r + beta * (p - omega * v)
        phat = precond(p)
        v = matvec(A, phat)
        denom = rhat @ v
        if abs(denom) < BREAKDOWN * np.linalg.norm(rhat) * np.linalg.norm(v):
            raise _Breakdown(x, it, res)
        alpha = rho_new / denom
        s = r - alpha * v
        if np.linalg.norm(s) / bnorm <= tol:
            x = x + alpha * phat
            r = b - matvec(A, x)
            res = np.linalg.norm(r) / bnorm
            rho = rho_new
            continue
        shat = precond(s)
        t = matvec(A, shat)
        tt = t @ t
        omega = (t @ s) / tt if tt > 0 else 0.0
        x = x + alpha * phat + omega * shat
        r = s - omega * t
        rho = rho_new
        res = np.linalg.norm(r) / bnorm
        if res <= tol:
            # confirm with the true residual before stopping
            r = b - matvec(A, x)
            res = np.linalg.norm(r) / bnorm
        if abs(omega) < BREAKDOWN:
            raise _Breakdown(x, it, res)
    return x, it, res


def bicgstab(A, b, tol: float = 1e-9, max_iter: int = 10000, preconditioner="ilu0", x0=None):
    """Right-preconditioned BiCGSTAB.

    Parameters
    ----------
    A : sparse matrix
    b : ndarray
    tol : float
        Relative residual target ``|b - A x| / |b|``.
    preconditioner : {"ilu0", None} or callable
        A callable receives a vector and returns ``M^{-1} v``.

    Returns
    -------
    x : ndarray
    report : SolveReport

    Raises
    ------
    NonConvergenceError
        After ``max_iter`` iterations or a second breakdown.
    """
    t0 = time.perf_counter()
    A = as_csr(A)
    b = np.asarray(b, dtype=float)
    if b.shape != (A.shape[0],) or not np.all(np.isfinite(b)):
        raise ValueError("right-hand side must be finite with length n")
    if preconditioner == "ilu0":
        precond = ILU0(A)
    elif preconditioner is None:
        precond = lambda v: v.copy()  # noqa: E731
    else:
        precond = preconditioner
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), SolveReport(0, 0.0, True, time.perf_counter() - t0)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    restarts = 0
    it = 0
    while True:
        try:
            x, it, res = _bicgstab_pass(A, b, x, precond, tol, max_iter, bnorm, it)
            break
        except _Breakdown as exc:
            x, it, res = exc.args
            if restarts:
                report = SolveReport(it, float(res), False, time.perf_counter() - t0, restarts)
                raise NonConvergenceError(f"BiCGSTAB broke down twice (iteration {it})", report) from None
            logger.info("BiCGSTAB breakdown at iteration %d; restarting", it)
            restarts += 1
    report = SolveReport(it, float(res), bool(res <= tol), time.perf_counter() - t0, restarts)
    if not report.converged:
        raise NonConvergenceError(f"BiCGSTAB reached {max_iter} iterations at residual {res:.3e}", report)
    return x, report


def write_matrix_market(path, A, rhs=None, comment: str = "") -> None:
    """Coordinate-format dump of ``A`` (and ``rhs`` as a dense array file alongside)."""
    scipy.io.mmwrite(str(path), as_csr(A).tocoo(), comment=comment)
    if rhs is not None:
        target = str(path)
        target = target[:-4] if target.endswith(".mtx") else target
        scipy.io.mmwrite(target + "_rhs.mtx", np.asarray(rhs, dtype=float).reshape(-1, 1))
