"""Uniform grid on [-1, 1]^3, side classification and interface crossings."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

logger = logging.getLogger(__name__)

DIM = 3
PERTURB = 1e-10
ALPHA_CLAMP = 1e-8
BISECTION_STEPS = 60


@dataclass(frozen=True)
class Grid:
    """``(N+1)^3`` nodes ``x_i = -1 + i*h`` with ``h = 2/N``."""

    n_subintervals: int
    dim: int = DIM

    def __post_init__(self):
        if int(self.n_subintervals) != self.n_subintervals or self.n_subintervals < 2:
            raise ValueError(f"N must be an integer >= 2, got {self.n_subintervals}")

    @property
    def N(self) -> int:
        return self.n_subintervals

    @property
    def h(self) -> float:
        return 2.0 / self.N

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N + 1,) * self.dim

    @property
    def size(self) -> int:
        return (self.N + 1) ** self.dim

    def coords(self, idx) -> np.ndarray:
        """Physical coordinates of a multi-index (or an array of them, last axis = dim)."""
        return -1.0 + np.asarray(idx, dtype=float) * self.h

    def linear(self, idx) -> int | np.ndarray:
        idx = np.asarray(idx)
        return np.ravel_multi_index(tuple(np.moveaxis(idx, -1, 0)), self.shape)

    def multi(self, lin) -> tuple[int, ...] | np.ndarray:
        out = np.unravel_index(lin, self.shape)
        if np.ndim(lin) == 0:
            return tuple(int(o) for o in out)
        return np.stack(out, axis=-1)

    def nodes(self) -> np.ndarray:
        """All node coordinates, shape ``(N+1, N+1, N+1, 3)``."""
        axis = np.linspace(-1.0, 1.0, self.N + 1)
        return np.stack(np.meshgrid(*([axis] * self.dim), indexing="ij"), axis=-1)

    def in_bounds(self, idx) -> bool:
        return all(0 <= i <= self.N for i in idx)

    def on_boundary(self, idx) -> bool:
        return any(i == 0 or i == self.N for i in idx)


def build_grid(N: int) -> Grid:
    return Grid(N)


@dataclass(frozen=True)
class SignField:
    """Nodal level-set values (after degeneracy perturbation) and their signs.

    ``sign == -1`` marks the inside region, ``+1`` the outside.
    """

    phi: np.ndarray
    sign: np.ndarray

    def __getitem__(self, idx) -> int:
        return int(self.sign[tuple(idx)])


def perturb_nodal(phi: np.ndarray, h: float) -> np.ndarray:
    """Push values within ``1e-10 h`` of zero off the interface, ties to the inside."""
    phi = np.array(phi, dtype=float, copy=True)
    eps = PERTURB * h
    small = np.abs(phi) < eps
    phi[small] = np.where(phi[small] > 0.0, eps, -eps)
    return phi


def sign_field(grid: Grid, surface=None, phi=None) -> SignField:
    if phi is None:
        phi = surface.phi(grid.nodes())
    phi = perturb_nodal(phi, grid.h)
    return SignField(phi=phi, sign=np.where(phi < 0.0, -1, 1).astype(np.int8))


class PointKind(Enum):
    INTERIOR = "interior"
    INTERFACE = "interface"


def classify_point(grid: Grid, signs: SignField, i) -> PointKind:
    i = tuple(int(v) for v in i)
    if not all(0 < v < grid.N for v in i):
        raise ValueError(f"{i} is a boundary index; boundary rows are Dirichlet")
    s = signs[i]
    for k in range(grid.dim):
        for step in (-1, 1):
            j = list(i)
            j[k] += step
            if signs[j] != s:
                return PointKind.INTERFACE
    return PointKind.INTERIOR


def interface_mask(signs: SignField) -> np.ndarray:
    """Boolean array of interface points (boundary layer excluded)."""
    sg = signs.sign
    mask = np.zeros(sg.shape, dtype=bool)
    inner = tuple(slice(1, -1) for _ in range(sg.ndim))
    centre = sg[inner]
    for k in range(sg.ndim):
        for step in (-1, 1):
            sl = [slice(1, -1)] * sg.ndim
            sl[k] = slice(1 + step, sg.shape[k] - 1 + step)
            mask[inner] |= sg[tuple(sl)] != centre
    return mask


@dataclass(frozen=True)
class Intersection:
    """Crossing of the segment from node ``base`` to ``base + direction*e_axis``.

    ``alpha`` is the distance from the base node in units of ``h``.
    """

    base: tuple[int, ...]
    axis: int
    direction: int
    alpha: float
    location: np.ndarray
    geometry: object = None

    @property
    def beta(self) -> float:
        return 1.0 - self.alpha


def _bisect(surface, start: np.ndarray, step: np.ndarray, f0: np.ndarray, f1: np.ndarray):
    """Vectorised bisection of ``phi(start + t*step) = 0`` on ``t in [0, 1]``."""
    lo = np.zeros(len(start))
    hi = np.ones(len(start))
    flo = f0.copy()
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        fm = surface.phi(start + mid[:, None] * step)
        left = np.sign(fm) == np.sign(flo)
        lo = np.where(left, mid, lo)
        flo = np.where(left, fm, flo)
        hi = np.where(left, hi, mid)
    t = 0.5 * (lo + hi)
    if np.any(hi - lo > 1e-12):
        raise RuntimeError("bisection did not converge")
    return t


def find_intersections(grid: Grid, surface, signs: SignField, bases, axes, directions, with_geometry=True):
    """All crossings for arrays of segments; segments without a sign change give ``None``."""
    from .levelset import geometry_batch

    bases = np.atleast_2d(np.asarray(bases, dtype=int))
    axes = np.asarray(axes, dtype=int).reshape(-1)
    directions = np.asarray(directions, dtype=int).reshape(-1)
    ends = bases.copy()
    ends[np.arange(len(bases)), axes] += directions
    f0 = signs.phi[tuple(bases.T)]
    f1 = signs.phi[tuple(ends.T)]
    crosses = np.sign(f0) != np.sign(f1)
    out = [None] * len(bases)
    if not np.any(crosses):
        return out
    sel = np.flatnonzero(crosses)
    start = grid.coords(bases[sel])
    step = np.zeros_like(start)
    step[np.arange(len(sel)), axes[sel]] = directions[sel] * grid.h
    t = _bisect(surface, start, step, f0[sel], f1[sel])
    alpha = np.clip(t, ALPHA_CLAMP, 1.0 - ALPHA_CLAMP)
    loc = start + alpha[:, None] * step
    geoms = geometry_batch(surface, loc) if with_geometry else [None] * len(sel)
    for n, j in enumerate(sel):
        out[j] = Intersection(
            base=tuple(int(v) for v in bases[j]),
            axis=int(axes[j]),
            direction=int(directions[j]),
            alpha=float(alpha[n]),
            location=loc[n],
            geometry=geoms[n],
        )
    return out


def find_intersection(grid: Grid, surface, i, k: int, s: int, signs: SignField | None = None):
    """Crossing on the segment ``x_i -> x_{i + s e_k}`` or ``None``."""
    if signs is None:
        j = list(i)
        j[k] += s
        pts = grid.coords(np.array([i, j]))
        vals = perturb_nodal(surface.phi(pts), grid.h)
        phi = np.zeros(grid.shape)
        phi[tuple(i)] = vals[0]
        phi[tuple(j)] = vals[1]
        signs = SignField(phi=phi, sign=np.where(phi < 0, -1, 1).astype(np.int8))
    return find_intersections(grid, surface, signs, [i], [k], [s])[0]


def check_single_crossing(grid: Grid, surface, i, k: int, s: int, samples: int = 8) -> bool:
    """Diagnostic: sample the segment and warn if phi changes sign more than once."""
    t = np.linspace(0.0, 1.0, samples + 2)
    start = grid.coords(i)
    pts = start[None, :] + np.outer(t, np.eye(grid.dim)[k] * s * grid.h)
    vals = surface.phi(pts)
    changes = int(np.sum(np.sign(vals[1:]) != np.sign(vals[:-1])))
    if changes > 1:
        logger.warning("segment %s axis %d dir %+d crosses the interface %d times", tuple(i), k, s, changes)
        return False
    return True
