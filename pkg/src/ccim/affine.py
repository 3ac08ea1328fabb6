"""Linear functionals over the local unknowns of a grid point.

Every quantity manipulated while building a coupling equation (derivative
approximations, jumps, Taylor expansions) is affine in a small, fixed set of
symbols attached to the base grid point:

* ``GridValue(offset)``: the unknown u at ``i + offset`` with ``|offset|_inf <= 2``
* ``FirstDeriv(k)``: du/dx_k at the base point
* ``PureSecond(k)``: d2u/dx_k2 at the base point
* ``MixedJump(k, l)``: the jump [d2u/dx_k dx_l] at the current intersection

The coefficients are stored densely in one float vector whose last slot is the
constant term, so that sums, scalings, substitutions and small dense solves
are plain numpy operations.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

__all__ = [
    "DIM",
    "MAX_RADIUS",
    "NSLOTS",
    "PAIRS",
    "AffineForm",
    "FirstDeriv",
    "GridValue",
    "MixedJump",
    "PureSecond",
    "SingularSystemError",
    "solve_linear_forms",
    "stack",
    "substitute",
]

DIM = 3
MAX_RADIUS = 2
_WIDTH = 2 * MAX_RADIUS + 1
_N_GRID = _WIDTH**DIM
PAIRS: tuple[tuple[int, int], ...] = ((0, 1), (0, 2), (1, 2))

_FIRST = _N_GRID
_SECOND = _FIRST + DIM
_MIXED = _SECOND + DIM
CONST = _MIXED + len(PAIRS)
NSLOTS = CONST + 1

PRUNE_RTOL = 1e-14
COND_LIMIT = 1e12


class SingularSystemError(ArithmeticError):
    """A small dense system is singular or too badly conditioned to trust."""


def _check_axis(axis: int) -> None:
    if not 0 <= axis < DIM:
        raise ValueError(f"axis must be in [0, {DIM}), got {axis}")


@dataclass(frozen=True)
class GridValue:
    offset: tuple[int, ...]

    def __post_init__(self):
        if len(self.offset) != DIM or max(abs(o) for o in self.offset) > MAX_RADIUS:
            raise ValueError(f"offset {self.offset} outside stencil box of radius {MAX_RADIUS}")

    @property
    def slot(self) -> int:
        idx = 0
        for o in self.offset:
            idx = idx * _WIDTH + (o + MAX_RADIUS)
        return idx


@dataclass(frozen=True)
class FirstDeriv:
    axis: int

    def __post_init__(self):
        _check_axis(self.axis)

    @property
    def slot(self) -> int:
        return _FIRST + self.axis


@dataclass(frozen=True)
class PureSecond:
    axis: int

    def __post_init__(self):
        _check_axis(self.axis)

    @property
    def slot(self) -> int:
        return _SECOND + self.axis


@dataclass(frozen=True)
class MixedJump:
    k: int
    l: int

    def __post_init__(self):
        if self.k >= self.l:
            raise ValueError("MixedJump requires k < l")

    @property
    def slot(self) -> int:
        return _MIXED + PAIRS.index((self.k, self.l))


def _offset_of(slot: int) -> tuple[int, ...]:
    out = []
    for _ in range(DIM):
        slot, r = divmod(slot, _WIDTH)
        out.append(r - MAX_RADIUS)
    return tuple(reversed(out))


def symbol_at(slot: int):
    """Inverse of ``symbol.slot`` (the constant slot returns ``None``)."""
    if slot < _FIRST:
        return GridValue(_offset_of(slot))
    if slot < _SECOND:
        return FirstDeriv(slot - _FIRST)
    if slot < _MIXED:
        return PureSecond(slot - _SECOND)
    if slot < CONST:
        return MixedJump(*PAIRS[slot - _MIXED])
    return None


GRID_SLOTS = slice(0, _N_GRID)
FIRST_SLOTS = slice(_FIRST, _FIRST + DIM)
SECOND_SLOTS = slice(_SECOND, _SECOND + DIM)
MIXED_SLOTS = slice(_MIXED, CONST)
ALL_OFFSETS = [tuple(o) for o in product(range(-MAX_RADIUS, MAX_RADIUS + 1), repeat=DIM)]


class AffineForm:
    """``sum_s c_s * s + c0`` over the local symbol basis."""

    __slots__ = ("coef",)

    def __init__(self, coef=None):
        if coef is None:
            coef = np.zeros(NSLOTS)
        self.coef = np.asarray(coef, dtype=float)

    @classmethod
    def of(cls, symbol, weight: float = 1.0) -> AffineForm:
        f = cls()
        f.coef[symbol.slot] = weight
        return f

    @classmethod
    def const(cls, value: float) -> AffineForm:
        f = cls()
        f.coef[CONST] = value
        return f

    @property
    def constant(self) -> float:
        return float(self.coef[CONST])

    def __getitem__(self, symbol) -> float:
        return float(self.coef[symbol.slot])

    def terms(self):
        """Nonzero ``(symbol, coefficient)`` pairs, constant excluded."""
        for slot in np.flatnonzero(self.coef[:CONST]):
            yield symbol_at(int(slot)), float(self.coef[slot])

    def __add__(self, other):
        if isinstance(other, AffineForm):
            return AffineForm(self.coef + other.coef)
        out = self.coef.copy()
        out[CONST] += other
        return AffineForm(out)

    __radd__ = __add__

    def __neg__(self):
        return AffineForm(-self.coef)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, scalar: float):
        return AffineForm(self.coef * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar: float):
        return AffineForm(self.coef / scalar)

    def evaluate(self, assignment: dict) -> float:
        """Value under ``{symbol: value}``; symbols not listed count as zero."""
        total = self.constant
        for sym, c in self.terms():
            total += c * assignment.get(sym, 0.0)
        return total

    def substitute(self, symbol, replacement: AffineForm) -> AffineForm:
        return substitute(self, symbol, replacement)

    def isclose(self, other: AffineForm, atol: float = 1e-12) -> bool:
        return bool(np.allclose(self.coef, other.coef, rtol=0.0, atol=atol))

    def __repr__(self):
        parts = [f"{c:+.6g}*{s}" for s, c in self.terms()]
        parts.append(f"{self.constant:+.6g}")
        return "AffineForm(" + " ".join(parts) + ")"


def prune(coef: np.ndarray) -> np.ndarray:
    """Zero out entries below ``PRUNE_RTOL`` times the largest magnitude (per row)."""
    coef = np.array(coef, dtype=float, copy=True)
    scale = np.max(np.abs(coef), axis=-1, keepdims=True)
    coef[np.abs(coef) < PRUNE_RTOL * scale] = 0.0
    return coef


def substitute(target: AffineForm, symbol, replacement: AffineForm) -> AffineForm:
    """Replace ``symbol`` in ``target`` by the form ``replacement``."""
    slot = symbol.slot
    if replacement.coef[slot] != 0.0:
        raise ValueError(f"replacement for {symbol} refers to {symbol} itself")
    w = target.coef[slot]
    if w == 0.0:
        return AffineForm(target.coef.copy())
    out = target.coef + w * replacement.coef
    out[slot] = 0.0
    return AffineForm(prune(out))


def substitute_rows(coefs: np.ndarray, slot: int, replacement: np.ndarray) -> np.ndarray:
    """Array version of :func:`substitute` for a stack of forms (``(..., NSLOTS)``)."""
    w = coefs[..., slot, None]
    out = coefs + w * replacement
    out[..., slot] = 0.0
    return out


def stack(forms) -> np.ndarray:
    return np.stack([f.coef for f in forms])


def condition_number(a: np.ndarray) -> float:
    """Exact 1-norm condition number of a small dense matrix (inf if singular)."""
    a = np.asarray(a, dtype=float)
    try:
        inv = np.linalg.inv(a)
    except np.linalg.LinAlgError:
        return np.inf
    if not np.all(np.isfinite(inv)):
        return np.inf
    return float(np.linalg.norm(a, 1) * np.linalg.norm(inv, 1))


def solve_coefficients(a: np.ndarray, rhs: np.ndarray, where=None) -> np.ndarray:
    """Solve ``a @ X = rhs`` where each column of ``rhs`` is one symbol slot."""
    cond = condition_number(a)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        loc = f" at grid point {where}" if where is not None else ""
        raise SingularSystemError(f"matrix is singular (cond_1={cond:.3g}){loc}")
    return prune(np.linalg.solve(a, rhs))


def solve_linear_forms(a, rhs, where=None) -> list[AffineForm]:
    """Coefficient-wise ``a^{-1} rhs`` for a list of forms."""
    a = np.asarray(a, dtype=float)
    out = solve_coefficients(a, stack(rhs), where=where)
    return [AffineForm(row) for row in out]
