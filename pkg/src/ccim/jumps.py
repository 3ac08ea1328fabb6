"""Jumps of first and second derivatives at an interface crossing.

Conventions
-----------
* ``[v] = v(outside) - v(inside)``.
* ``side`` is the sign of the base grid point (-1 inside, +1 outside); the
  base point's side is called "own", the other side "far".  Own-side
  quantities at the crossing come from Taylor expansion around the base point.
* Unknown ordering of the second-derivative jumps is :data:`JUMP_ORDER`:
  ``[u_xx], [u_yy], [u_zz], [u_xy], [u_xz], [u_yz]``.
* Row ordering of G: the three tangential-tangential rows
  ``(s1,s1), (s1,s2), (s2,s2)``, the two flux rows ``s1, s2``, then the
  Laplacian row.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .affine import (
    CONST,
    NSLOTS,
    PAIRS,
    AffineForm,
    FirstDeriv,
    GridValue,
    MixedJump,
    PureSecond,
    solve_coefficients,
)

JUMP_ORDER = ((0, 0), (1, 1), (2, 2)) + PAIRS
_TANGENT_PAIRS = ((0, 0), (0, 1), (1, 1))


@dataclass
class JumpValues:
    """Interface data at one crossing; ``eps``, ``a``, ``f`` are (inside, outside)."""

    tau: float
    grad_tau: np.ndarray
    hess_tau: np.ndarray
    sigma: float
    grad_sigma: np.ndarray
    eps: np.ndarray
    grad_eps: np.ndarray
    a: np.ndarray
    f: np.ndarray


def _slot_vec(symbol, weight=1.0):
    v = np.zeros(NSLOTS)
    v[symbol.slot] = weight
    return v


def _const_vec(value):
    v = np.zeros(NSLOTS)
    v[CONST] = value
    return v


def _as_coef(form):
    return form.coef if isinstance(form, AffineForm) else np.asarray(form, dtype=float)


def hessian_forms(mixed) -> np.ndarray:
    """``(3, 3, NSLOTS)`` Hessian at the base point: PureSecond on the diagonal, ``mixed`` off it."""
    H = np.zeros((3, 3, NSLOTS))
    for k in range(3):
        H[k, k, PureSecond(k).slot] = 1.0
    for (k, l), form in mixed.items():
        H[k, l] = H[l, k] = _as_coef(form)
    return H


def own_side_at_crossing(k: int, s: int, alpha: float, h: float, mixed):
    """Own-side ``u``, ``grad u`` and Hessian at ``x_i + s*alpha*h*e_k`` as forms."""
    H = hessian_forms(mixed)
    step = s * alpha * h
    grad = np.stack([_slot_vec(FirstDeriv(j)) for j in range(3)]) + step * H[:, k]
    u = _slot_vec(GridValue((0, 0, 0))) + step * _slot_vec(FirstDeriv(k)) + 0.5 * step**2 * _slot_vec(PureSecond(k))
    return u, grad, H


def _normal_jump(geom, vals: JumpValues, grad_own, side):
    """``[grad u . n] = (sigma - [eps] grad u_own . n) / eps_far``."""
    far = 1 if side < 0 else 0
    jump_eps = vals.eps[1] - vals.eps[0]
    return (_const_vec(vals.sigma) - jump_eps * np.einsum("i,is->s", geom.normal, grad_own)) / vals.eps[far]


def gradient_jump(geom, vals: JumpValues, grad_own, side) -> np.ndarray:
    """``[grad u]`` as ``(3, NSLOTS)``: normal part from the flux condition, tangential part from ``grad tau``."""
    un = _normal_jump(geom, vals, grad_own, side)
    tangential = sum(np.dot(vals.grad_tau, t) * t for t in geom.tangents)
    out = np.outer(geom.normal, un)
    out[:, CONST] += tangential
    return out


def first_derivative_jump(k, geom, data: JumpValues, mixed, alpha, h, side, direction=1, component=None) -> AffineForm:
    """``[du/dx_component]`` at the crossing along axis ``k`` (component defaults to ``k``)."""
    _, grad_own, _ = own_side_at_crossing(k, direction, alpha, h, mixed)
    comp = k if component is None else component
    return AffineForm(gradient_jump(geom, data, grad_own, side)[comp])


def _pattern(a, b):
    """Coefficients of ``a^T [Hess] b`` on the jump unknowns."""
    row = np.empty(6)
    for j, (p, q) in enumerate(JUMP_ORDER):
        row[j] = a[p] * b[p] if p == q else a[p] * b[q] + a[q] * b[p]
    return row


def assemble_G(geom) -> np.ndarray:
    s, n = geom.tangents, geom.normal
    rows = [_pattern(s[m], s[q]) for m, q in _TANGENT_PAIRS]
    rows += [_pattern(s[m], n) for m in range(2)]
    rows.append(np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0]))
    return np.array(rows)


def jump_rhs_coefficients(geom, vals: JumpValues, k, s, alpha, h, side, mixed) -> np.ndarray:
    """Right-hand sides of the G-system as ``(6, NSLOTS)``; may contain MixedJump columns."""
    n, T, J = geom.normal, geom.tangents, geom.normal_jacobian
    c = 1.0 if side < 0 else -1.0
    u_own, grad_own, H_own = own_side_at_crossing(k, s, alpha, h, mixed)
    gjump = gradient_jump(geom, vals, grad_own, side)
    un_jump = _normal_jump(geom, vals, grad_own, side)
    grad_far = grad_own + c * gjump
    u_far = u_own + c * _const_vec(vals.tau)
    if side < 0:
        u_pm, grad_pm = (u_own, u_far), (grad_own, grad_far)
    else:
        u_pm, grad_pm = (u_far, u_own), (grad_far, grad_own)
    eps, geps = vals.eps, vals.grad_eps
    jump_eps = eps[1] - eps[0]
    eps_far = eps[1] if side < 0 else eps[0]

    rows = []
    for m, q in _TANGENT_PAIRS:
        curv = T[q] @ J @ T[m]
        r = (un_jump - _const_vec(np.dot(vals.grad_tau, n))) * curv
        r[CONST] += T[q] @ vals.hess_tau @ T[m]
        rows.append(r)
    for m in range(2):
        dn = J @ T[m]
        r = _const_vec(np.dot(vals.grad_sigma, T[m]))
        r -= jump_eps * np.einsum("i,ijs,j->s", T[m], H_own, n)
        r -= np.einsum("i,is->s", dn, eps[1] * grad_pm[1] - eps[0] * grad_pm[0])
        r -= np.dot(geps[1], T[m]) * np.einsum("i,is->s", n, grad_pm[1])
        r -= -np.dot(geps[0], T[m]) * np.einsum("i,is->s", n, grad_pm[0])
        rows.append(r / eps_far)
    lap = []
    for side_idx in (0, 1):
        lap.append(
            (vals.a[side_idx] * u_pm[side_idx] - _const_vec(vals.f[side_idx]) - np.einsum("i,is->s", geps[side_idx], grad_pm[side_idx]))
            / eps[side_idx]
        )
    rows.append(lap[1] - lap[0])
    return np.array(rows)


def assemble_jump_rhs(geom, data: JumpValues, alpha_vec, h, side, mixed, axis=0, direction=1) -> list[AffineForm]:
    """Form-valued G-system right-hand side for the crossing along ``axis``.

    ``alpha_vec`` may be the scalar alpha of this crossing or a per-axis vector.
    """
    alpha = float(np.asarray(alpha_vec).reshape(-1)[axis if np.ndim(alpha_vec) else 0])
    return [AffineForm(r) for r in jump_rhs_coefficients(geom, data, axis, direction, alpha, h, side, mixed)]


@dataclass
class JumpSolution:
    """Second-derivative jumps over GridValue/FirstDeriv/PureSecond symbols, in :data:`JUMP_ORDER`."""

    coef: np.ndarray  # (6, NSLOTS)

    @property
    def forms(self) -> dict:
        return {pair: AffineForm(self.coef[j]) for j, pair in enumerate(JUMP_ORDER)}

    def pure(self, k: int) -> np.ndarray:
        return self.coef[k]

    def mixed(self, k: int, l: int) -> np.ndarray:
        return self.coef[3 + PAIRS.index((min(k, l), max(k, l)))]

    def resolve(self, coefs: np.ndarray) -> np.ndarray:
        """Replace every MixedJump symbol in ``coefs`` (``(..., NSLOTS)``) by its solved form."""
        out = np.array(coefs, dtype=float, copy=True)
        for q, (k, l) in enumerate(PAIRS):
            slot = MixedJump(k, l).slot
            w = out[..., slot, None]
            out = out + w * self.coef[3 + q]
            out[..., slot] = 0.0
        return out


def solve_jumps(G, rhs, where=None) -> JumpSolution:
    """Move MixedJump terms of ``rhs`` to the left and solve for all six jumps."""
    rhs = np.array([_as_coef(r) for r in rhs], dtype=float)
    Gm = np.array(G, dtype=float, copy=True)
    for q, (k, l) in enumerate(PAIRS):
        slot = MixedJump(k, l).slot
        Gm[:, 3 + q] -= rhs[:, slot]
        rhs[:, slot] = 0.0
    return JumpSolution(solve_coefficients(Gm, rhs, where=where))
