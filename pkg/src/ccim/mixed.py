"""Finite-difference schemes for mixed derivatives next to an interface.

Every scheme approximates ``d2u/dx_k dx_l`` at a base point ``x_i`` using
values on the base point's own side, optionally helped by ``du/dx``,
``d2u/dx2`` at ``x_i`` or by the far-side mixed derivative plus its jump.

All formulas are written for a general orientation: the sign flips
``e_k -> sk e_k``, ``e_l -> sl e_l`` are applied to the offsets and to the
odd-order coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from itertools import product

import numpy as np

from .affine import MAX_RADIUS, AffineForm, FirstDeriv, GridValue, MixedJump, PureSecond

__all__ = ["Kind", "MixedScheme", "UnresolvablePointError", "enumerate_schemes", "rank_schemes", "scheme_form"]


class Kind(Enum):
    CENTRAL = "central"
    BIASED = "biased"
    CORNER = "corner"
    FIRST_DERIV = "first_deriv"
    SECOND_DERIV = "second_deriv"
    SHIFT_OUT = "shift_out_of_plane"
    SHIFT_IN = "shift_in_plane"
    CROSS = "cross_interface"


RANK = {
    Kind.CENTRAL: 1,
    Kind.BIASED: 2,
    Kind.CORNER: 3,
    Kind.FIRST_DERIV: 3,
    Kind.SECOND_DERIV: 5,
    Kind.SHIFT_OUT: 6,
    Kind.SHIFT_IN: 7,
    Kind.CROSS: 8,
}

# nominal order of the local truncation error
ORDER = {kind: 1 for kind in Kind} | {Kind.CENTRAL: 2}

U_ONLY = (Kind.CENTRAL, Kind.BIASED, Kind.CORNER)


class UnresolvablePointError(RuntimeError):
    """No mixed-derivative scheme applies; the grid is too coarse for the interface."""


@dataclass(frozen=True)
class MixedScheme:
    """One stencil for ``u_kl``.

    ``grid`` weights are in units of ``1/h^2``, ``first`` weights in units of
    ``1/h``, ``second`` and ``jump`` weights are dimensionless.
    """

    kind: Kind
    pair: tuple[int, int]
    orientation: tuple
    grid: tuple = ()
    first: tuple = ()
    second: tuple = ()
    jump: float = 0.0
    same_side: tuple = ()
    far_side: tuple = ()
    score: float = field(default=0.0, compare=False)

    @property
    def radius(self) -> int:
        offs = [o for o, _ in self.grid]
        return max((max(abs(v) for v in o) for o in offs), default=0)

    @property
    def rank(self) -> int:
        return RANK[self.kind]

    def form(self, h: float) -> AffineForm:
        return scheme_form(self, h)


def _e(axis: int, t: int = 1) -> np.ndarray:
    v = np.zeros(3, dtype=int)
    v[axis] = t
    return v


def _offsets(*vecs):
    return tuple(tuple(int(x) for x in v) for v in vecs)


def _weights(pairs):
    out = {}
    for off, w in pairs:
        off = tuple(int(x) for x in off)
        out[off] = out.get(off, 0.0) + w
    return tuple((o, w) for o, w in out.items() if w != 0.0)


def _central(k, l, base=None):
    b = np.zeros(3, dtype=int) if base is None else np.asarray(base)
    pts = [(b + _e(k, sk) + _e(l, sl), sk * sl / 4.0) for sk, sl in product((1, -1), repeat=2)]
    yield (), _weights(pts)


def _biased(k, l, base=None):
    b = np.zeros(3, dtype=int) if base is None else np.asarray(base)
    for c, o in ((k, l), (l, k)):
        for t in (1, -1):
            # t * (u(+c+to) - u(-c+to) - u(+c) + u(-c)) / 2h^2
            pts = [
                (b + _e(c) + _e(o, t), t / 2.0),
                (b - _e(c) + _e(o, t), -t / 2.0),
                (b + _e(c), -t / 2.0),
                (b - _e(c), t / 2.0),
            ]
            yield (c, t), _weights(pts)


def _corner(k, l, base=None):
    b = np.zeros(3, dtype=int) if base is None else np.asarray(base)
    for sk, sl in product((1, -1), repeat=2):
        w = float(sk * sl)
        pts = [(b, w), (b + _e(k, sk), -w), (b + _e(l, sl), -w), (b + _e(k, sk) + _e(l, sl), w)]
        yield (sk, sl), _weights(pts)


_U_ONLY_BUILDERS = {Kind.CENTRAL: _central, Kind.BIASED: _biased, Kind.CORNER: _corner}


def _used(grid_weights):
    return tuple(o for o, _ in grid_weights)


PATCH = MAX_RADIUS + 1
_WIDTH = 2 * PATCH + 1
_STRIDES = np.array([_WIDTH * _WIDTH, _WIDTH, 1])


class _Context:
    """Signs and ``|phi|`` on a padded ``(2R+3)^3`` patch around the base point, flattened.

    Out-of-box nodes carry sign 0, so they never match either side.
    """

    def __init__(self, signs, i):
        self.i = np.asarray(i, dtype=int)
        self.own = int(signs.sign[tuple(self.i)])
        w = _WIDTH
        sign = np.zeros((w, w, w), dtype=np.int8)
        phi = np.zeros((w, w, w))
        n = np.array(signs.sign.shape)
        lo = self.i - PATCH
        src = tuple(slice(max(a, 0), min(a + w, m)) for a, m in zip(lo, n))
        dst = tuple(slice(s.start - a, s.stop - a) for s, a in zip(src, lo))
        sign[dst] = signs.sign[src]
        phi[dst] = np.abs(signs.phi[src])
        self.sign = sign.reshape(-1)
        self.phi = phi.reshape(-1)

    def check(self, table, side):
        """Per template of ``table``: all used points on ``side``, and the score."""
        ok = np.all((self.sign[table.idx] == side) | table.pad, axis=1)
        score = np.where(table.pad, np.inf, self.phi[table.idx]).min(axis=1)
        return ok, score


class _Table:
    """Templates with their used offsets as a padded index matrix into the flat patch."""

    def __init__(self, meta, grids):
        self.meta = meta
        L = max(len(g) for g in grids)
        self.idx = np.zeros((len(grids), L), dtype=np.int64)
        self.pad = np.ones((len(grids), L), dtype=bool)
        for r, gw in enumerate(grids):
            offs = np.array(_used(gw), dtype=int) + PATCH
            self.idx[r, : len(offs)] = offs @ _STRIDES
            self.pad[r, : len(offs)] = False


def _templates_uncached(k, l):
    meta, grids = [], []
    for kind in U_ONLY:
        for orient, gw in _U_ONLY_BUILDERS[kind](k, l):
            meta.append((kind, orient, gw, (), ()))
            grids.append(gw)
    for p1, p2 in ((k, l), (l, k)):
        for sg in (1, -1):
            # sg * (u(+p1+sg p2) - u(-p1+sg p2) - 2h u_p1) / 2h^2
            gw = _weights([(_e(p1) + _e(p2, sg), sg / 2.0), (-_e(p1) + _e(p2, sg), -sg / 2.0)])
            meta.append((Kind.FIRST_DERIV, (p1, sg), gw, ((p1, -float(sg)),), ()))
            grids.append(gw)
    for p1, p2 in ((k, l), (l, k)):
        for s1, s2 in product((1, -1), repeat=2):
            # s1 s2 (u(s1 p1 + s2 p2) - u(s2 p2) - s1 h u_p1 - h^2/2 u_p1p1) / h^2
            w = float(s1 * s2)
            gw = _weights([(_e(p1, s1) + _e(p2, s2), w), (_e(p2, s2), -w)])
            meta.append((Kind.SECOND_DERIV, (p1, s1, s2), gw, ((p1, -w * s1),), ((p1, -0.5 * w),)))
            grids.append(gw)
    base = _Table(meta, grids)

    smeta, sgrids = [], []
    for m in range(3):
        for t in (1, -1):
            nb = _e(m, t)
            for kind in U_ONLY:
                for orient, gw in _U_ONLY_BUILDERS[kind](k, l, nb):
                    smeta.append(((m, t), kind, orient, gw))
                    sgrids.append(gw)
    neighbours = _Table([(m, t) for m in range(3) for t in (1, -1)],
                        [((tuple(_e(m, t)), 1.0),) for m in range(3) for t in (1, -1)])
    return base, _Table(smeta, sgrids), neighbours


_TEMPLATES: dict = {}


def _templates(k, l):
    if (k, l) not in _TEMPLATES:
        _TEMPLATES[(k, l)] = _templates_uncached(k, l)
    return _TEMPLATES[(k, l)]


def _best_shifted(table, ok, score, nb):
    """Best value-only scheme centred at neighbour ``nb``: first kind in U_ONLY order, then largest score."""
    best = None
    for r in np.flatnonzero(ok):
        where, kind, orient, gw = table.meta[r]
        if where != nb:
            continue
        key = (U_ONLY.index(kind), -score[r])
        if best is None or key < best[0]:
            best = (key, kind, orient, gw, float(score[r]))
    return best


def enumerate_schemes(signs, i, k: int, l: int) -> list[MixedScheme]:
    """Every applicable scheme for ``u_kl`` at node ``i``."""
    if k == l:
        raise ValueError("mixed derivative needs two distinct axes")
    k, l = min(k, l), max(k, l)
    ctx = signs if isinstance(signs, _Context) else _Context(signs, i)
    own = ctx.own
    pair = (k, l)
    base, shifted, neighbours = _templates(k, l)
    out: list[MixedScheme] = []

    ok, score = ctx.check(base, own)
    for r in np.flatnonzero(ok):
        kind, orient, gw, first, second = base.meta[r]
        out.append(MixedScheme(kind, pair, orient, grid=gw, first=first, second=second,
                               same_side=_used(gw), score=float(score[r])))

    c = 1.0 if own < 0 else -1.0
    nb_own, _ = ctx.check(neighbours, own)
    nb_far, _ = ctx.check(neighbours, -own)
    ok_own, sc_own = ctx.check(shifted, own)
    ok_far, sc_far = ctx.check(shifted, -own)
    for q, (m, t) in enumerate(neighbours.meta):
        if nb_far[q]:
            best = _best_shifted(shifted, ok_far, sc_far, (m, t))
            if best is not None:
                _, kind, orient, gw, sc = best
                out.append(MixedScheme(Kind.CROSS, pair, (m, t, kind.value, orient), grid=gw, jump=-c,
                                       far_side=_used(gw), score=sc))
        elif nb_own[q]:
            best = _best_shifted(shifted, ok_own, sc_own, (m, t))
            if best is not None:
                _, kind, orient, gw, sc = best
                shift_kind = Kind.SHIFT_IN if m in pair else Kind.SHIFT_OUT
                out.append(MixedScheme(shift_kind, pair, (m, t, kind.value, orient), grid=gw,
                                       same_side=_used(gw), score=sc))
    return out


def rank_schemes(available) -> list[MixedScheme]:
    """Order by kind preference, then by distance of the stencil from the interface.

    Corner and first-derivative schemes share a rank; the caller breaks that
    tie by comparing coupling-matrix condition numbers.
    """
    if not available:
        raise UnresolvablePointError("no mixed-derivative scheme available")
    return sorted(available, key=lambda s: (s.rank, -s.score))


def scheme_form(scheme: MixedScheme, h: float) -> AffineForm:
    f = AffineForm()
    for off, w in scheme.grid:
        f.coef[GridValue(off).slot] += w / h**2
    for axis, w in scheme.first:
        f.coef[FirstDeriv(axis).slot] += w / h
    for axis, w in scheme.second:
        f.coef[PureSecond(axis).slot] += w
    if scheme.jump:
        f.coef[MixedJump(*scheme.pair).slot] += scheme.jump
    return f
