"""Shared helpers: evaluate mixed-derivative schemes on analytic functions."""

import numpy as np
import sympy as sp

from ccim.affine import ALL_OFFSETS, CONST, NSLOTS, FirstDeriv, GridValue, MixedJump, PureSecond
from ccim.mesh import SignField
from ccim.mixed import ORDER, Kind, enumerate_schemes, scheme_form

X = sp.symbols("x y z", real=True)
x, y, z = X

# every third derivative of an exponential is nonzero, and the distinct rates
# keep leading-error combinations such as a^2 b - a b^2 away from zero
OWN = sp.exp(1.1 * x - 0.4 * y + 0.6 * z)
FAR = sp.exp(-0.6 * x + 1.1 * y + 0.8 * z)
BASE = np.array([0.3, -0.2, 0.4])
HS = (0.1, 0.05, 0.025)

CENTRE = (4, 4, 4)


def patch_signs(far=None):
    """9^3 sign field, inside everywhere except the optional ``far`` mask."""
    sign = -np.ones((9, 9, 9), dtype=np.int8)
    if far is not None:
        sign[far] = 1
    return SignField(phi=sign.astype(float), sign=sign)


def half_space(axis, t):
    """Mask of nodes strictly beyond the centre along ``t * e_axis``."""
    idx = np.indices((9, 9, 9))[axis] - CENTRE[axis]
    return t * idx >= 1


class Evaluator:
    def __init__(self, own=OWN, far=FAR):
        self.fns = {}
        for name, e in (("own", own), ("far", far)):
            grad = [sp.diff(e, v) for v in X]
            self.fns[name] = (
                sp.lambdify(X, e, "numpy"),
                [sp.lambdify(X, g, "numpy") for g in grad],
                [[sp.lambdify(X, sp.diff(e, a, b), "numpy") for b in X] for a in X],
            )

    def mixed(self, which, k, l, p=BASE):
        return float(self.fns[which][2][k][l](*p))

    def slots(self, scheme, h, p=BASE):
        """Exact symbol values for ``scheme`` at ``p``: far-side values where the scheme reads the far side."""
        u, g, H = self.fns["own"]
        uf = self.fns["far"][0]
        far = set(scheme.far_side)
        v = np.zeros(NSLOTS)
        v[CONST] = 1.0
        for off in ALL_OFFSETS:
            q = p + h * np.asarray(off)
            v[GridValue(off).slot] = (uf if tuple(off) in far else u)(*q)
        for k in range(3):
            v[FirstDeriv(k).slot] = g[k](*p)
            v[PureSecond(k).slot] = H[k][k](*p)
        k, l = scheme.pair
        v[MixedJump(k, l).slot] = self.mixed("far", k, l, p) - self.mixed("own", k, l, p)
        return v

    def error(self, scheme, h, p=BASE):
        k, l = scheme.pair
        return abs(scheme_form(scheme, h).coef @ self.slots(scheme, h, p) - self.mixed("own", k, l, p))


def all_schemes():
    """Every scheme the catalogue produces: the uniform field plus one cross-interface field per direction."""
    out = {}
    fields = [patch_signs()] + [patch_signs(half_space(m, t)) for m in range(3) for t in (1, -1)]
    for signs in fields:
        for k, l in ((0, 1), (0, 2), (1, 2)):
            for s in enumerate_schemes(signs, CENTRE, k, l):
                out.setdefault((s.kind, s.pair, s.orientation), s)
    return list(out.values())


def observed_order(scheme, ev, hs=HS):
    errs = np.array([ev.error(scheme, h) for h in hs])
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0]), errs


def truncation_battery(hs=HS):
    """``(scheme, nominal, observed, errors)`` for every scheme in the catalogue."""
    ev = Evaluator()
    rows = []
    for s in all_schemes():
        order, errs = observed_order(s, ev, hs)
        rows.append((s, ORDER[s.kind], order, errs))
    return rows


KINDS = set(Kind)
