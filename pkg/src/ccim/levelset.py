"""Level-set surfaces and their differential geometry.

A surface is anything with vectorised ``phi``, ``grad`` and ``hess`` methods
taking points of shape ``(..., 3)``.  The inside region is ``phi < 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import sympy as sp

__all__ = [
    "Atom",
    "CATALOG",
    "EightBalls",
    "ExprSurface",
    "MolecularSurface",
    "Surface",
    "SurfaceGeometry",
    "catalog_surface",
    "geometry_at",
    "geometry_batch",
    "molecular_surface",
    "parse_pqr",
    "scale_to_box",
]

GRAD_FLOOR = 1e-8
_X = sp.symbols("x y z", real=True)


@dataclass(frozen=True)
class SurfaceGeometry:
    normal: np.ndarray
    tangents: np.ndarray  # rows s_1, s_2
    normal_jacobian: np.ndarray  # entry (a, b) = d n_a / d x_b


class Surface:
    name = "surface"

    def phi(self, x):
        raise NotImplementedError

    def grad(self, x):
        raise NotImplementedError

    def hess(self, x):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r})"


def _broadcast_components(values, shape):
    return np.stack([np.broadcast_to(np.asarray(v, dtype=float), shape) for v in values], axis=-1)


class ExprSurface(Surface):
    """Surface given by a sympy expression in ``x, y, z``; derivatives are exact."""

    def __init__(self, expr, name: str = "expr"):
        self.name = name
        self.expr = sp.sympify(expr)
        grad = [sp.diff(self.expr, v) for v in _X]
        hess = [sp.diff(g, v) for g in grad for v in _X]
        self._phi = sp.lambdify(_X, self.expr, "numpy")
        self._grad = sp.lambdify(_X, grad, "numpy")
        self._hess = sp.lambdify(_X, hess, "numpy")

    def phi(self, x):
        x = np.asarray(x, dtype=float)
        out = self._phi(x[..., 0], x[..., 1], x[..., 2])
        return np.broadcast_to(np.asarray(out, dtype=float), x.shape[:-1]).copy()

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        return _broadcast_components(self._grad(x[..., 0], x[..., 1], x[..., 2]), x.shape[:-1])

    def hess(self, x):
        x = np.asarray(x, dtype=float)
        flat = _broadcast_components(self._hess(x[..., 0], x[..., 1], x[..., 2]), x.shape[:-1])
        return flat.reshape(x.shape[:-1] + (3, 3))


class EightBalls(Surface):
    """Union of eight balls of radius 0.3 centred at ``(+-0.5, +-0.5, +-0.5)``.

    Derivatives come from the nearest ball, which is exact away from the
    medial planes where two balls are equidistant.
    """

    name = "eight_balls"

    def __init__(self, radius: float = 0.3, offset: float = 0.5):
        self.radius = radius
        k = np.arange(8)
        self.centres = offset * np.stack(
            [(-1.0) ** (k // 4), (-1.0) ** (k // 2), (-1.0) ** k], axis=-1
        )

    def _nearest(self, x):
        x = np.asarray(x, dtype=float)
        d = np.linalg.norm(x[..., None, :] - self.centres, axis=-1)
        j = np.argmin(d, axis=-1)
        rel = x - self.centres[j]
        return rel, np.take_along_axis(d, j[..., None], axis=-1)[..., 0]

    def phi(self, x):
        _, d = self._nearest(x)
        return d - self.radius

    def grad(self, x):
        rel, d = self._nearest(x)
        return rel / d[..., None]

    def hess(self, x):
        rel, d = self._nearest(x)
        u = rel / d[..., None]
        eye = np.eye(3)
        return (eye - u[..., :, None] * u[..., None, :]) / d[..., None, None]


def _sphere(radius: float = 0.5, centre=(0.0, 0.0, 0.0)):
    x, y, z = _X
    cx, cy, cz = centre
    return sp.sqrt((x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2) - radius


class _Peanut(ExprSurface):
    """The angular factor ``yz / r^2`` has no limit at the origin.

    Every direction gives a value in ``[-0.7, -0.3]`` there, so the origin is
    inside; it gets ``-0.5`` instead of NaN.
    """

    def __init__(self):
        super().__init__(_peanut(), "peanut")

    def phi(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = super().phi(x)
        out[np.all(x == 0.0, axis=-1)] = -0.5
        return out


def _peanut():
    # theta measured from +z, psi the azimuth: sin(2 theta) sin(psi) = 2 y z / r^2
    x, y, z = _X
    r = sp.sqrt(x**2 + y**2 + z**2)
    return r - sp.Rational(1, 2) - sp.Rational(2, 5) * y * z / r**2


def _popcorn(r0: float = 0.6, amplitude: float = 2.0, width: float = 25.0):
    x, y, z = _X
    bumps = []
    for k in range(10):
        ang = 2 * k * math.pi / 5 - (k // 5) * math.pi
        bumps.append(
            (r0 / math.sqrt(5) * 2 * math.cos(ang), r0 / math.sqrt(5) * 2 * math.sin(ang), r0 / math.sqrt(5) * (-1) ** (k // 5))
        )
    bumps += [(0.0, 0.0, r0), (0.0, 0.0, -r0)]
    total = sp.sqrt(x**2 + y**2 + z**2) - r0
    for cx, cy, cz in bumps:
        total -= amplitude * sp.exp(-width * ((x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2))
    return total


def _banana():
    x, y, z = _X
    w = 7 * x + 6
    return (
        w**4 + 2401 * y**4 + sp.Rational(7203, 2) * z**4 + 98 * w**2 * (y**2 + z**2) + 4802 * y**2 * z**2
        - 94 * w**2 + 3822 * y**2 - 4606 * z**2 + 1521
    )


def _ellipsoid():
    x, y, z = _X
    return 2 * x**2 + 3 * y**2 + 6 * z**2 - sp.Rational(13, 10)


def _donut():
    x, y, z = _X
    return (sp.sqrt(x**2 + y**2) - sp.Rational(3, 5)) ** 2 + z**2 - sp.Rational(4, 25)


CATALOG = {
    "ellipsoid": lambda: ExprSurface(_ellipsoid(), "ellipsoid"),
    "peanut": _Peanut,
    "donut": lambda: ExprSurface(_donut(), "donut"),
    "banana": lambda: ExprSurface(_banana(), "banana"),
    "popcorn": lambda **kw: ExprSurface(_popcorn(**kw), "popcorn"),
    "eight_balls": lambda **kw: EightBalls(**kw),
    "sphere": lambda radius=0.5, centre=(0.0, 0.0, 0.0): ExprSurface(_sphere(radius, centre), f"sphere({radius})"),
}


def catalog_surface(name: str, **params) -> Surface:
    try:
        factory = CATALOG[name]
    except KeyError:
        raise ValueError(f"unknown surface {name!r}; choose from {sorted(CATALOG)}") from None
    return factory(**params)


def _frames(normals: np.ndarray) -> np.ndarray:
    """Tangent pairs from the two axes least aligned with ``n``, Gram-Schmidt in axis order."""
    m = len(normals)
    order = np.argsort(np.abs(normals), axis=1, kind="stable")[:, :2]
    order.sort(axis=1)
    eye = np.eye(3)
    out = np.empty((m, 2, 3))
    prev = None
    for j in range(2):
        e = eye[order[:, j]]
        v = e - np.sum(e * normals, axis=1, keepdims=True) * normals
        if prev is not None:
            v -= np.sum(v * prev, axis=1, keepdims=True) * prev
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        out[:, j] = v
        prev = v
    return out


def geometry_batch(surface: Surface, points) -> list[SurfaceGeometry]:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    g = surface.grad(pts)
    H = surface.hess(pts)
    norm = np.linalg.norm(g, axis=1)
    if np.any(norm <= GRAD_FLOOR):
        bad = pts[np.argmin(norm)]
        raise ValueError(f"level-set gradient vanishes near {bad}")
    n = g / norm[:, None]
    proj = np.eye(3) - n[:, :, None] * n[:, None, :]
    jac = proj @ H / norm[:, None, None]
    tangents = _frames(n)
    return [SurfaceGeometry(n[i], tangents[i], jac[i]) for i in range(len(pts))]


def geometry_at(surface: Surface, x) -> SurfaceGeometry:
    return geometry_batch(surface, np.asarray(x, dtype=float)[None, :])[0]


@dataclass
class Atom:
    position: np.ndarray
    radius: float
    charge: float = 0.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        # force fields assign zero radius to some hydrogens; such atoms carry charge only
        if not self.radius >= 0:
            raise ValueError(f"atom radius must be nonnegative, got {self.radius}")


def parse_pqr(path) -> list[Atom]:
    """Read ATOM/HETATM records; the last five fields are x y z charge radius."""
    atoms = []
    with open(Path(path)) as fh:
        for lineno, line in enumerate(fh, 1):
            fields = line.split()
            if not fields or fields[0] not in ("ATOM", "HETATM"):
                continue
            if len(fields) < 6:
                raise ValueError(f"{path}:{lineno}: truncated record")
            try:
                x, y, z, q, r = (float(v) for v in fields[-5:])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: bad numeric field ({exc})") from None
            atoms.append(Atom((x, y, z), r, q))
    if not atoms:
        raise ValueError(f"{path}: no ATOM/HETATM records")
    return atoms


def scale_to_box(atoms: list[Atom], margin: float = 0.2) -> list[Atom]:
    """Uniformly scale and centre so every ball lies in ``[-1+margin, 1-margin]^3``."""
    pos = np.array([a.position for a in atoms])
    rad = np.array([a.radius for a in atoms])
    lo = (pos - rad[:, None]).min(axis=0)
    hi = (pos + rad[:, None]).max(axis=0)
    centre = 0.5 * (lo + hi)
    half = 0.5 * float(np.max(hi - lo))
    scale = (1.0 - margin) / half
    return [Atom((a.position - centre) * scale, a.radius * scale, a.charge) for a in atoms]


@dataclass
class MolecularSurface(Surface):
    """``phi = c - sum_i chi((r_i - |x - p_i|)/eta)`` with ``chi(t) = (1 + tanh t)/2``."""

    positions: np.ndarray
    radii: np.ndarray
    level: float = 0.25
    eta: float = 1.0 / 40
    chunk: int = 2048
    name: str = field(default="molecule")

    def _terms(self, x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, 3)
        for start in range(0, len(flat), self.chunk):
            rel = flat[start:start + self.chunk, None, :] - self.positions[None]
            d = np.linalg.norm(rel, axis=-1)
            th = np.tanh((self.radii[None] - d) / self.eta)
            yield start, rel, d, th

    def phi(self, x):
        x = np.asarray(x, dtype=float)
        out = np.empty(x.size // 3)
        for start, _, _, th in self._terms(x):
            out[start:start + len(th)] = self.level - np.sum(0.5 * (1.0 + th), axis=1)
        return out.reshape(x.shape[:-1])

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        out = np.empty((x.size // 3, 3))
        for start, rel, d, th in self._terms(x):
            dchi = 0.5 * (1.0 - th**2) / self.eta
            out[start:start + len(th)] = np.einsum("pa,pai->pi", dchi / d, rel)
        return out.reshape(x.shape)

    def hess(self, x):
        x = np.asarray(x, dtype=float)
        out = np.empty((x.size // 3, 3, 3))
        eye = np.eye(3)
        for start, rel, d, th in self._terms(x):
            dchi = 0.5 * (1.0 - th**2) / self.eta
            d2chi = -(1.0 - th**2) * th / self.eta**2
            u = rel / d[..., None]
            uu = u[..., :, None] * u[..., None, :]
            out[start:start + len(th)] = np.einsum("pa,paij->pij", -d2chi, uu) + np.einsum(
                "pa,paij->pij", dchi / d, eye - uu
            )
        return out.reshape(x.shape + (3,))


def molecular_surface(atoms: list[Atom], c: float = 0.25, eta: float = 1.0 / 40) -> MolecularSurface:
    if not atoms:
        raise ValueError("need at least one atom")
    if eta <= 0:
        raise ValueError("eta must be positive")
    # a zero-radius ball would still add chi(-d/eta) ~ 1/2 near its centre
    balls = [a for a in atoms if a.radius > 0]
    if not balls:
        raise ValueError("every atom has zero radius")
    return MolecularSurface(
        positions=np.array([a.position for a in balls]),
        radii=np.array([a.radius for a in balls]),
        level=c,
        eta=eta,
    )
