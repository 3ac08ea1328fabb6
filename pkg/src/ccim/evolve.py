"""Level-set evolution of the interface under the normal speed ``[grad u . n]``.

Each step solves the interface problem on the current surface, recovers the
speed at the grid-line crossings, extends it to the grid in order of
increasing ``|phi|`` and advances ``phi_t + v |grad phi| = 0`` with a Godunov
upwind Hamiltonian and forward Euler.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field

import numba
import numpy as np

from .levelset import Surface
from .mesh import Grid, build_grid, sign_field

logger = logging.getLogger(__name__)

CFL = 0.5


def example4_speed(r):
    """Exact normal speed ``4r / (1 + r^2)^2`` of the radial example."""
    return 4.0 * r / (1.0 + r * r) ** 2


def reference_radius(r0: float, T: float, dt: float = 1e-6, speed=example4_speed) -> float:
    """Classical RK4 for ``dr/dt = speed(r)``; the last step is shortened to land on ``T``."""
    if r0 <= 0:
        raise ValueError("initial radius must be positive")
    steps = int(np.ceil(T / dt - 1e-9)) if T > 0 else 0
    r = float(r0)
    t = 0.0
    for n in range(steps):
        step = min(dt, T - t)
        k1 = speed(r)
        k2 = speed(r + 0.5 * step * k1)
        k3 = speed(r + 0.5 * step * k2)
        k4 = speed(r + step * k3)
        r += step * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        t = (n + 1) * dt if n + 1 < steps else T
    return r


@dataclass
class LevelSetState:
    phi: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        if not (np.any(self.phi < 0) and np.any(self.phi > 0)):
            raise ValueError("phi has no sign change; the interface left the box")


def _cubic_weights(frac):
    """Lagrange weights on nodes -1, 0, 1, 2 for fractional positions ``frac``."""
    t = frac[..., None]
    nodes = np.array([-1.0, 0.0, 1.0, 2.0])
    w = np.ones(frac.shape + (4,))
    for a in range(4):
        for b in range(4):
            if a != b:
                w[..., a] *= (t[..., 0] - nodes[b]) / (nodes[a] - nodes[b])
    return w


class GridLevelSet(Surface):
    """Surface given by nodal values; tensor-product cubic interpolation between nodes.

    On grid lines the interpolant reduces to a 1-D cubic through four nodes.
    Derivatives are central differences of the nodal field, interpolated the same way.
    """

    def __init__(self, grid: Grid, phi: np.ndarray):
        self.grid = grid
        self.values = np.asarray(phi, dtype=float)
        h = grid.h
        g = np.stack(np.gradient(self.values, h, edge_order=2), axis=-1)
        H = np.stack([np.stack(np.gradient(g[..., a], h, edge_order=2), axis=-1) for a in range(3)], axis=-2)
        self._grad = g
        self._hess = 0.5 * (H + np.swapaxes(H, -1, -2))
        self.name = "grid"

    def _interp(self, field, x):
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1]
        pts = x.reshape(-1, 3)
        s = (pts + 1.0) / self.grid.h
        base = np.clip(np.floor(s).astype(int), 1, self.grid.N - 2)
        frac = s - base
        w = _cubic_weights(frac)  # (m, 3, 4)
        tail = field.shape[3:]
        out = np.zeros((len(pts),) + tail)
        for a in range(4):
            for b in range(4):
                for c in range(4):
                    wt = w[:, 0, a] * w[:, 1, b] * w[:, 2, c]
                    v = field[base[:, 0] + a - 1, base[:, 1] + b - 1, base[:, 2] + c - 1]
                    out += wt.reshape((-1,) + (1,) * len(tail)) * v
        return out.reshape(shape + tail)

    def phi(self, x):
        return self._interp(self.values, x)

    def grad(self, x):
        return self._interp(self._grad, x)

    def hess(self, x):
        return self._interp(self._hess, x)


@numba.njit(cache=True)
def _march(phi, v, known, order, h):
    nx, ny, nz = phi.shape
    for q in range(len(order)):
        lin = order[q]
        i = lin // (ny * nz)
        j = (lin // nz) % ny
        k = lin % nz
        if known[i, j, k]:
            continue
        num = 0.0
        den = 0.0
        a = abs(phi[i, j, k])
        for axis in range(3):
            best_w = 0.0
            best_v = 0.0
            for s in (-1, 1):
                ii, jj, kk = i, j, k
                if axis == 0:
                    ii += s
                elif axis == 1:
                    jj += s
                else:
                    kk += s
                if ii < 0 or jj < 0 or kk < 0 or ii >= nx or jj >= ny or kk >= nz:
                    continue
                if not known[ii, jj, kk]:
                    continue
                w = (a - abs(phi[ii, jj, kk])) / h
                if w > best_w:
                    best_w = w
                    best_v = v[ii, jj, kk]
            num += best_w * best_v
            den += best_w
        if den > 0.0:
            v[i, j, k] = num / den
        else:
            # no upwind neighbour yet: plain average of known neighbours
            cnt = 0
            acc = 0.0
            for axis in range(3):
                for s in (-1, 1):
                    ii, jj, kk = i, j, k
                    if axis == 0:
                        ii += s
                    elif axis == 1:
                        jj += s
                    else:
                        kk += s
                    if 0 <= ii < nx and 0 <= jj < ny and 0 <= kk < nz and known[ii, jj, kk]:
                        acc += v[ii, jj, kk]
                        cnt += 1
            v[i, j, k] = acc / cnt if cnt else 0.0
        known[i, j, k] = True


def extend_velocity(grid: Grid, phi: np.ndarray, intersections, speeds) -> np.ndarray:
    """Extend crossing speeds to every node so that ``grad v . grad phi = 0``.

    Segment endpoints take inverse-distance weighted averages of the speeds at
    their adjacent crossings; the rest is filled in increasing ``|phi|`` from
    upwind neighbours.
    """
    if len(intersections) == 0:
        raise ValueError("no interface crossings to extend from")
    v = np.zeros(grid.shape)
    wsum = np.zeros(grid.shape)
    for x, sp in zip(intersections, speeds):
        far = list(x.base)
        far[x.axis] += x.direction
        for node, dist in ((tuple(x.base), x.alpha), (tuple(far), 1.0 - x.alpha)):
            w = 1.0 / max(dist, 1e-12)
            v[node] += w * sp
            wsum[node] += w
    known = wsum > 0
    v[known] /= wsum[known]
    order = np.argsort(np.abs(phi), axis=None, kind="stable").astype(np.int64)
    _march(np.ascontiguousarray(phi, dtype=float), v, known.copy(), order, grid.h)
    return v


def _minmod(a, b):
    return np.where(np.abs(a) <= np.abs(b), a, b) * (a * b > 0)


def _godunov_norm(phi: np.ndarray, h: float, upwind: np.ndarray, order: int = 2) -> np.ndarray:
    """Godunov ``|grad phi|`` for motion with sign ``upwind``.

    One-sided differences are first order or second-order ENO; the box faces
    use linear extrapolation.
    """
    g = 2
    p = np.pad(phi, g, mode="reflect", reflect_type="odd")
    inner = (slice(g, -g),) * 3
    pos = np.zeros_like(phi)
    neg = np.zeros_like(phi)
    for axis in range(3):
        def sh(k):
            sl = list(inner)
            sl[axis] = slice(g + k, p.shape[axis] - g + k)
            return p[tuple(sl)]

        c = sh(0)
        dm = (c - sh(-1)) / h
        dp = (sh(1) - c) / h
        if order == 2:
            d2m = (sh(-2) - 2 * sh(-1) + c) / h
            d2c = (sh(-1) - 2 * c + sh(1)) / h
            d2p = (c - 2 * sh(1) + sh(2)) / h
            dm = dm + 0.5 * _minmod(d2m, d2c)
            dp = dp - 0.5 * _minmod(d2c, d2p)
        pos += np.maximum(np.maximum(dm, 0.0) ** 2, np.minimum(dp, 0.0) ** 2)
        neg += np.maximum(np.minimum(dm, 0.0) ** 2, np.maximum(dp, 0.0) ** 2)
    return np.where(upwind > 0, np.sqrt(pos), np.sqrt(neg))


def godunov_step(phi: np.ndarray, v: np.ndarray, dt: float, h: float, cfl: float = CFL, order: int = 2) -> np.ndarray:
    """Forward-Euler step of ``phi_t + v |grad phi| = 0`` with the Godunov Hamiltonian."""
    vmax = float(np.max(np.abs(v)))
    if vmax == 0.0:
        return phi.copy()
    if dt > cfl * h / vmax * (1 + 1e-12):
        raise ValueError(f"dt={dt:.3e} violates the CFL limit {cfl * h / vmax:.3e}")
    return phi - dt * v * _godunov_norm(phi, h, v, order)


def reinitialize(phi: np.ndarray, h: float, iterations: int = 20) -> np.ndarray:
    """Pseudo-time iterations of ``phi_t + S(phi0) (|grad phi| - 1) = 0`` toward a distance function."""
    S = phi / np.sqrt(phi**2 + h**2)
    out = phi.copy()
    for _ in range(iterations):
        out = out - 0.5 * h * S * (_godunov_norm(out, h, S, 1) - 1.0)
    return out


def measure_radii(grid: Grid, phi: np.ndarray) -> np.ndarray:
    """Distances from the origin of every grid-line zero crossing (linear interpolation per segment)."""
    phi = np.asarray(phi)
    nodes = grid.nodes()
    out = []
    for axis in range(3):
        a = [slice(None)] * 3
        b = [slice(None)] * 3
        a[axis] = slice(0, -1)
        b[axis] = slice(1, None)
        f0, f1 = phi[tuple(a)], phi[tuple(b)]
        cross = np.sign(f0) != np.sign(f1)
        t = f0[cross] / (f0[cross] - f1[cross])
        x0 = nodes[tuple(a)][cross]
        x0[:, axis] += t * grid.h
        out.append(np.linalg.norm(x0, axis=1))
    return np.concatenate(out)


@dataclass
class EvolveReport:
    N: int
    T: float
    steps: int
    radii: np.ndarray
    reference: float
    max_error: float
    rmse: float
    history: list = field(default_factory=list)
    seconds: float = 0.0


def interface_speeds(assembly, u):
    """``[grad u . n]`` at every crossing, from the inside endpoint's forms."""
    from .postproc import gradient_jump_normal, interface_gradients

    recs = interface_gradients(assembly, u)
    inters = [r.intersection for r, _, _ in recs]
    speeds = np.array([gradient_jump_normal(r.intersection, (gm, gp)) for r, gm, gp in recs])
    return inters, speeds


def run_expanding_sphere(N: int, T: float = 0.1, cfl: float = CFL, r0: float = 0.5, tol: float = 1e-9,
                         problem=None, reinit_every: int = 0) -> EvolveReport:
    """Evolve a sphere of radius ``r0`` to time ``T`` under the computed normal speed."""
    from .coupling import assemble_system
    from .problems import example4
    from .sparse import bicgstab

    if N < 20:
        raise ValueError("N must be at least 20")
    t0 = time.perf_counter()
    grid = build_grid(N)
    prob = problem if problem is not None else example4()
    nodes = grid.nodes()
    state = LevelSetState(np.linalg.norm(nodes, axis=-1) - r0)
    history = []
    step = 0
    while state.t < T - 1e-14:
        surface = GridLevelSet(grid, state.phi)
        signs = sign_field(grid, phi=state.phi)
        try:
            asm = assemble_system(grid, surface, prob, signs=signs)
            u, _ = bicgstab(asm.matrix, asm.rhs, tol=tol)
        except Exception as exc:
            raise RuntimeError(f"PDE solve failed at t={state.t:.6f} (step {step}): {exc}") from exc
        inters, speeds = interface_speeds(asm, u)
        v = extend_velocity(grid, state.phi, inters, speeds)
        dt = min(cfl * grid.h / float(np.max(np.abs(v))), T - state.t)
        phi = godunov_step(state.phi, v, dt, grid.h, cfl)
        if reinit_every and (step + 1) % reinit_every == 0:
            phi = reinitialize(phi, grid.h)
        state = LevelSetState(phi, state.t + dt)
        step += 1
        radii = measure_radii(grid, state.phi)
        history.append({"step": step, "t": state.t, "dt": dt, "r_min": radii.min(), "r_mean": radii.mean(),
                        "r_max": radii.max()})
        logger.info("N=%d step %d t=%.4f dt=%.4f mean r=%.6f", N, step, state.t, dt, radii.mean())
    radii = measure_radii(grid, state.phi)
    ref = reference_radius(r0, T)
    err = radii - ref
    return EvolveReport(N, T, step, radii, ref, float(np.max(np.abs(err))), float(np.sqrt(np.mean(err**2))),
                        history, time.perf_counter() - t0)


def write_history_csv(path, report: EvolveReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["step", "t", "dt", "r_min", "r_mean", "r_max"])
        w.writeheader()
        w.writerows(report.history)


def write_radii_csv(path, report: EvolveReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["radius", "reference", "error"])
        for r in report.radii:
            w.writerow([r, report.reference, r - report.reference])
