"""Manufactured interface problems.

Each preset fixes piecewise expressions for the exact solution, the
coefficient ``eps`` and the reaction term ``a``; the source ``f`` and the jump
data ``tau``, ``sigma`` follow from them so the exact solution is known.
Index 0 of every pair is the inside region (phi < 0), index 1 the outside.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import sympy as sp

from .jumps import JumpValues

X = sp.symbols("x y z", real=True)


def _vectorise(expr):
    fn = sp.lambdify(X, expr, "numpy")

    def call(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(fn(x[..., 0], x[..., 1], x[..., 2]), dtype=float), x.shape[:-1])

    return call


def _vectorise_list(exprs, tail_shape):
    fn = sp.lambdify(X, list(exprs), "numpy")

    def call(x):
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1]
        parts = [np.broadcast_to(np.asarray(v, dtype=float), shape) for v in fn(x[..., 0], x[..., 1], x[..., 2])]
        return np.stack(parts, axis=-1).reshape(shape + tail_shape)

    return call


class _Field:
    """Value, gradient and Hessian of one scalar sympy expression."""

    def __init__(self, expr):
        self.expr = sp.sympify(expr)
        grad = [sp.diff(self.expr, v) for v in X]
        self.value = _vectorise(self.expr)
        self.grad = _vectorise_list(grad, (3,))
        self.hess = _vectorise_list([sp.diff(g, v) for g in grad for v in X], (3, 3))


@dataclass
class Problem:
    """Piecewise data ``(inside, outside)`` for ``-div(eps grad u) + a u = f``."""

    name: str
    u: tuple
    eps: tuple
    a: tuple

    def __post_init__(self):
        self.u = tuple(sp.sympify(e) for e in self.u)
        self.eps = tuple(sp.sympify(e) for e in self.eps)
        self.a = tuple(sp.sympify(e) for e in self.a)
        self.f = tuple(
            -sum(sp.diff(e * sp.diff(u, v), v) for v in X) + a * u
            for u, e, a in zip(self.u, self.eps, self.a)
        )
        self._u = [_Field(e) for e in self.u]
        self._eps = [_Field(e) for e in self.eps]
        self._a = [_vectorise(e) for e in self.a]
        self._f = [_vectorise(e) for e in self.f]

    # region-wise evaluation; ``side`` is 0 (inside) or 1 (outside)
    def exact(self, side, x):
        return self._u[side].value(x)

    def exact_grad(self, side, x):
        return self._u[side].grad(x)

    def exact_hess(self, side, x):
        return self._u[side].hess(x)

    def epsilon(self, side, x):
        return self._eps[side].value(x)

    def epsilon_grad(self, side, x):
        return self._eps[side].grad(x)

    def reaction(self, side, x):
        return self._a[side](x)

    def source(self, side, x):
        return self._f[side](x)

    def by_sign(self, method, sign, x):
        """Evaluate a region-wise quantity with the side chosen per point from ``sign``."""
        x = np.asarray(x, dtype=float)
        inside = np.asarray(sign) < 0
        return np.where(inside, method(0, x), method(1, x)) if np.ndim(inside) else method(0 if inside else 1, x)

    def interface_data(self) -> "ManufacturedData":
        return ManufacturedData(self)


class ManufacturedData:
    """Jump data implied by the exact solution: ``tau = u+ - u-``, ``sigma = [eps du/dn]``."""

    def __init__(self, problem: Problem):
        self.problem = problem

    def values(self, points, normals, jacobians) -> list[JumpValues]:
        p = self.problem
        x = np.atleast_2d(np.asarray(points, dtype=float))
        n = np.atleast_2d(normals)
        jac = np.asarray(jacobians).reshape(-1, 3, 3)
        u = np.stack([p.exact(s, x) for s in (0, 1)])
        g = np.stack([p.exact_grad(s, x) for s in (0, 1)])
        H = np.stack([p.exact_hess(s, x) for s in (0, 1)])
        eps = np.stack([p.epsilon(s, x) for s in (0, 1)])
        geps = np.stack([p.epsilon_grad(s, x) for s in (0, 1)])
        a = np.stack([p.reaction(s, x) for s in (0, 1)])
        f = np.stack([p.source(s, x) for s in (0, 1)])
        gn = np.einsum("smi,mi->sm", g, n)
        flux = eps * gn
        # d/dx_b (eps grad u . n) = d_b eps (grad u . n) + eps (H n + jac^T grad u)_b
        dflux = (
            geps * gn[..., None]
            + eps[..., None] * (np.einsum("smij,mj->smi", H, n) + np.einsum("mji,smj->smi", jac, g))
        )
        out = []
        for m in range(len(x)):
            out.append(
                JumpValues(
                    tau=float(u[1, m] - u[0, m]),
                    grad_tau=g[1, m] - g[0, m],
                    hess_tau=H[1, m] - H[0, m],
                    sigma=float(flux[1, m] - flux[0, m]),
                    grad_sigma=dflux[1, m] - dflux[0, m],
                    eps=eps[:, m].copy(),
                    grad_eps=geps[:, m].copy(),
                    a=a[:, m].copy(),
                    f=f[:, m].copy(),
                )
            )
        return out


def _r2():
    x, y, z = X
    return x**2 + y**2 + z**2


def example1() -> Problem:
    x, y, z = X
    inside = x**3 + x * y**2 + y**3 + z**4 + sp.sin(3 * (x**2 + y**2))
    outside = x * y + x**4 + y**4 + x * z**2 + sp.cos(2 * x + y**2 + z**3)
    return Problem("example1", (inside, outside), (2, 80), (0, 0))


def example3() -> Problem:
    x, y, z = X
    base = example1()
    return Problem("example3", base.u, (2, 80), (2 * sp.sin(x), 80 * sp.cos(z)))


def example4() -> Problem:
    r2 = _r2()
    r = sp.sqrt(r2)
    return Problem("example4", (1 / (1 + r2), -1 / (1 + r2)), (2, 80), (2 * sp.sin(r), 80 * sp.cos(r)))


def quadratic_oracle() -> Problem:
    x, y, z = X
    inside = x**2 + 2 * y**2 - z**2 + x * y - sp.Rational(1, 2) * y * z + sp.Rational(3, 10) * x * z + x - y + 1
    outside = -x**2 + sp.Rational(1, 2) * y**2 + 3 * z**2 - 2 * x * y + y * z - x * z + 2 * z + sp.Rational(1, 2)
    return Problem("quadratic_oracle", (inside, outside), (2, 80), (0, 0))


def smooth_poisson() -> Problem:
    """No interface jump: the same smooth solution on both sides, eps = 1, a = 0."""
    x, y, z = X
    u = sp.sin(x + 2 * y) * sp.exp(z) + x**2 * y
    return Problem("smooth_poisson", (u, u), (1, 1), (0, 0))


def molecule() -> Problem:
    base = example1()
    return Problem("molecule", base.u, (2, 80), (0, 0))


PRESETS = {
    "example1": example1,
    "example3": example3,
    "example4": example4,
    "quadratic_oracle": quadratic_oracle,
    "smooth_poisson": smooth_poisson,
    "molecule": molecule,
}


def preset_problem(name: str) -> Problem:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
