"""Coupling equations at interface points and the per-point PDE rows.

At an interface point the unknowns ``du/dx_k`` and ``d2u/dx_k2`` are tied to
the neighbouring u-values by ``2d`` one-dimensional relations, one per grid
segment ``(k, s)``.  Segments that stay on one side give plain Taylor rows;
segments crossing the interface give rows in which the derivative jumps have
been eliminated through the jump conditions.  Inverting the coupling matrix
expresses every derivative through u-values only.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .affine import (
    CONST,
    NSLOTS,
    PAIRS,
    AffineForm,
    FirstDeriv,
    GridValue,
    PureSecond,
    SingularSystemError,
    condition_number,
    solve_coefficients,
)
from .jumps import (
    JumpSolution,
    JumpValues,
    assemble_G,
    gradient_jump,
    jump_rhs_coefficients,
    own_side_at_crossing,
    solve_jumps,
)
from .mixed import Kind, UnresolvablePointError, enumerate_schemes, rank_schemes, scheme_form

logger = logging.getLogger(__name__)

DERIV_SLOTS = slice(FirstDeriv(0).slot, PureSecond(2).slot + 1)
ROW_ORDER = tuple((k, s) for k in range(3) for s in (-1, 1))
MAX_FALLBACK_TRIES = 24


@dataclass
class CouplingSystem:
    """``M @ (u_x, u_y, u_z, u_xx, u_yy, u_zz) = rhs``; rows follow :data:`ROW_ORDER`."""

    M: np.ndarray
    rhs: np.ndarray  # (6, NSLOTS), grid values and constant only
    condition_estimate: float

    @property
    def rhs_forms(self) -> list[AffineForm]:
        return [AffineForm(r) for r in self.rhs]


@dataclass
class CrossingRecord:
    """What the gradient recovery needs at one crossing, already in u-values."""

    intersection: object
    values: JumpValues
    grad_own: np.ndarray  # (3, NSLOTS) own-side gradient at the crossing
    grad_jump: np.ndarray  # (3, NSLOTS)
    mixed: np.ndarray  # (3, NSLOTS) mixed derivatives at the base point, order PAIRS
    jumps: JumpSolution
    side: int = -1


@dataclass
class DerivativeForms:
    first: np.ndarray  # (3, NSLOTS)
    second: np.ndarray  # (3, NSLOTS)
    crossings: dict = field(default_factory=dict)
    schemes: dict = field(default_factory=dict)
    condition: float = 1.0

    @property
    def radius(self) -> int:
        from .affine import ALL_OFFSETS, GRID_SLOTS

        used = np.flatnonzero(np.any(np.vstack([self.first, self.second])[:, GRID_SLOTS] != 0.0, axis=0))
        return max((max(abs(v) for v in ALL_OFFSETS[j]) for j in used), default=0)

    def first_form(self, k: int) -> AffineForm:
        return AffineForm(self.first[k])

    def second_form(self, k: int) -> AffineForm:
        return AffineForm(self.second[k])

    def mixed_form(self, k: int, l: int, crossing=None) -> AffineForm:
        rec = self.crossings[crossing] if crossing is not None else next(iter(self.crossings.values()))
        return AffineForm(rec.mixed[PAIRS.index((min(k, l), max(k, l)))])


def _unit(k, s=1):
    o = [0, 0, 0]
    o[k] = s
    return tuple(o)


def _gv(offset) -> np.ndarray:
    v = np.zeros(NSLOTS)
    v[GridValue(offset).slot] = 1.0
    return v


def taylor_row(k: int, s: int, h: float):
    """``u_{i+s e_k} - u_i = s h u_k + h^2/2 u_kk`` as (M row, rhs form), unscaled."""
    row = np.zeros(6)
    row[k] = s * h
    row[3 + k] = 0.5 * h * h
    return row, AffineForm(_gv(_unit(k, s)) - _gv((0, 0, 0)))


def interface_row(k, s, intersection, data: JumpValues, jump_solution: JumpSolution, first_jump_form, h, side):
    """Crossing segment relation with the jumps substituted, as (M row, rhs form), unscaled.

    ``u_{i+se_k} - u_i = c tau + c s beta h [u_k] + s h u_k + h^2/2 u_kk + c beta^2 h^2/2 [u_kk]``
    with ``c = +1`` for an inside base point and ``-1`` otherwise.
    """
    alpha = intersection.alpha
    beta = 1.0 - alpha
    c = 1.0 if side < 0 else -1.0
    jk = first_jump_form.coef if isinstance(first_jump_form, AffineForm) else np.asarray(first_jump_form)
    R = c * s * beta * h * jk + c * 0.5 * beta**2 * h * h * jump_solution.pure(k)
    R = R.copy()
    R[CONST] += c * data.tau
    R[FirstDeriv(k).slot] += s * h
    R[PureSecond(k).slot] += 0.5 * h * h
    row = R[DERIV_SLOTS].copy()
    rest = R.copy()
    rest[DERIV_SLOTS] = 0.0
    return row, AffineForm(_gv(_unit(k, s)) - _gv((0, 0, 0)) - rest)


def estimate_condition(M) -> float:
    """Exact 1-norm condition number (``inf`` when singular)."""
    return condition_number(M)


def substitute_derivatives(coefs: np.ndarray, D: np.ndarray) -> np.ndarray:
    """Replace FirstDeriv/PureSecond symbols in ``coefs`` by the rows of ``D``."""
    coefs = np.atleast_2d(coefs)
    out = coefs.copy()
    out[:, DERIV_SLOTS] = 0.0
    return out + coefs[:, DERIV_SLOTS] @ D


def _schemes_for(signs, i, forced):
    options = {}
    for k, l in PAIRS:
        avail = enumerate_schemes(signs, i, k, l)
        if not avail:
            raise UnresolvablePointError(
                f"no mixed-derivative scheme for u_{'xyz'[k]}{'xyz'[l]} at {tuple(i)}; refine the grid"
            )
        ranked = rank_schemes(avail)
        want = (forced or {}).get((tuple(i), (k, l)))
        if want is not None:
            hit = [s for s in ranked if s.kind == want]
            if hit:
                ranked = hit + [s for s in ranked if s.kind != want]
            else:
                logger.warning("forced scheme %s unavailable for %s at %s", want, (k, l), tuple(i))
        options[(k, l)] = ranked
    return options


def _candidates(options, forced_pairs=()):
    """Primary selection(s): two when a corner/first-derivative tie exists."""
    base = {pair: opts[0] for pair, opts in options.items()}
    tie_pairs = []
    for pair, opts in options.items():
        if pair in forced_pairs:
            continue
        kinds = {s.kind for s in opts}
        if opts[0].rank == 3 and Kind.CORNER in kinds and Kind.FIRST_DERIV in kinds:
            tie_pairs.append(pair)
    if not tie_pairs:
        return [base]
    out = []
    for kind in (Kind.CORNER, Kind.FIRST_DERIV):
        sel = dict(base)
        for pair in tie_pairs:
            sel[pair] = next(s for s in options[pair] if s.kind == kind)
        out.append(sel)
    return out


def _fallbacks(options):
    """Further selections in order of increasing total demotion."""
    idx_lists = [range(len(options[p])) for p in PAIRS]
    combos = sorted(product(*idx_lists), key=lambda t: (sum(t), t))
    for combo in combos[1:MAX_FALLBACK_TRIES]:
        yield {p: options[p][j] for p, j in zip(PAIRS, combo)}


def _assemble(i, side, h, crossings, selection):
    mixed = {pair: scheme_form(selection[pair], h).coef for pair in PAIRS} if selection else {}
    M = np.zeros((6, 6))
    rhs = np.zeros((6, NSLOTS))
    pending = {}
    for r, (k, s) in enumerate(ROW_ORDER):
        if (k, s) not in crossings:
            row, form = taylor_row(k, s, h)
        else:
            inter, vals = crossings[(k, s)]
            geom = inter.geometry
            jrhs = jump_rhs_coefficients(geom, vals, k, s, inter.alpha, h, side, mixed)
            jsol = solve_jumps(assemble_G(geom), jrhs, where=tuple(i))
            _, grad_own, _ = own_side_at_crossing(k, s, inter.alpha, h, mixed)
            gjump = jsol.resolve(gradient_jump(geom, vals, grad_own, side))
            row, form = interface_row(k, s, inter, vals, jsol, gjump[k], h, side)
            pending[(k, s)] = (inter, vals, jsol.resolve(grad_own), gjump, jsol.resolve(np.array([mixed[p] for p in PAIRS])), jsol)
        M[r] = row
        rhs[r] = form.coef
    M /= h * h
    rhs /= h * h
    return CouplingSystem(M, rhs, estimate_condition(M)), pending


def build_coupling(i, grid, surface, signs, data, crossings=None, forced=None):
    """Coupling system and derivative forms at interface point ``i``.

    ``crossings`` maps ``(axis, direction)`` to ``(Intersection, JumpValues)``;
    it is computed from ``surface`` and ``data`` when omitted.
    """
    i = tuple(int(v) for v in i)
    side = signs[i]
    h = grid.h
    if crossings is None:
        crossings = local_crossings(i, grid, surface, signs, data)

    if not crossings:
        system, pending = _assemble(i, side, h, {}, None)
        selections = []
    else:
        options = _schemes_for(signs, i, forced)
        forced_pairs = {p for (pt, p) in (forced or {}) if pt == i}
        tried = []
        for sel in _candidates(options, forced_pairs):
            try:
                tried.append((sel, *_assemble(i, side, h, crossings, sel)))
            except SingularSystemError:
                continue
        if not tried:
            for sel in _fallbacks(options):
                try:
                    tried.append((sel, *_assemble(i, side, h, crossings, sel)))
                    break
                except SingularSystemError:
                    continue
        if not tried:
            raise UnresolvablePointError(f"every scheme combination gives a singular system at {i}")
        tried = [t for t in tried if np.isfinite(t[1].condition_estimate)] or tried
        sel, system, pending = min(tried, key=lambda t: t[1].condition_estimate)
        selections = sel

    D = solve_coefficients(system.M, system.rhs, where=i)
    forms = DerivativeForms(first=D[:3], second=D[3:], schemes=dict(selections) if selections else {},
                            condition=system.condition_estimate)
    for key, (inter, vals, grad_own, gjump, mixed_res, jsol) in pending.items():
        forms.crossings[key] = CrossingRecord(
            intersection=inter,
            values=vals,
            grad_own=substitute_derivatives(grad_own, D),
            grad_jump=substitute_derivatives(gjump, D),
            mixed=substitute_derivatives(mixed_res, D),
            jumps=jsol,
            side=side,
        )
    return system, forms


def local_crossings(i, grid, surface, signs, data):
    from .mesh import find_intersections

    segs = [(k, s) for k, s in ROW_ORDER if signs.sign[tuple(np.add(i, _unit(k, s)))] != signs[i]]
    if not segs:
        return {}
    inters = find_intersections(grid, surface, signs, [i] * len(segs), [k for k, _ in segs], [s for _, s in segs])
    vals = data.values(
        np.array([x.location for x in inters]),
        np.array([x.geometry.normal for x in inters]),
        np.array([x.geometry.normal_jacobian for x in inters]),
    )
    return {seg: (x, v) for seg, x, v in zip(segs, inters, vals)}


@dataclass
class PdeRow:
    columns: np.ndarray
    values: np.ndarray
    rhs: float


def interior_row(i, grid, eps: float, grad_eps, a: float, f: float) -> PdeRow:
    """Central differences for ``-eps Lap u - grad eps . grad u + a u = f``."""
    h = grid.h
    cols = [grid.linear(i)]
    vals = [eps * (2 * grid.dim) / h**2 + a]
    for k in range(grid.dim):
        for s in (-1, 1):
            j = list(i)
            j[k] += s
            cols.append(grid.linear(j))
            vals.append(-eps / h**2 - s * grad_eps[k] / (2 * h))
    return PdeRow(np.array(cols), np.array(vals), float(f))


def interface_pde_row(i, grid, forms: DerivativeForms, eps: float, grad_eps, a: float, f: float) -> PdeRow:
    from .affine import ALL_OFFSETS, GRID_SLOTS

    row = -np.einsum("k,ks->s", np.asarray(grad_eps, dtype=float), forms.first) - eps * forms.second.sum(axis=0)
    row[GridValue((0, 0, 0)).slot] += a
    gv = row[GRID_SLOTS]
    nz = np.flatnonzero(gv)
    cols = np.array([grid.linear(np.add(i, ALL_OFFSETS[j])) for j in nz], dtype=np.int64)
    return PdeRow(cols, gv[nz], float(f - row[CONST]))


def assemble_pde_row(i, grid, forms=None, *, eps, grad_eps=(0.0, 0.0, 0.0), a=0.0, f=0.0) -> PdeRow:
    """PDE row at ``i``: boundary rows are handled by the caller (identity, rhs ``g``)."""
    if forms is None:
        return interior_row(i, grid, eps, grad_eps, a, f)
    return interface_pde_row(i, grid, forms, eps, grad_eps, a, f)


@dataclass
class Assembly:
    """Global system ``matrix @ u = rhs`` with the per-point derivative forms kept for recovery."""

    grid: object
    signs: object
    matrix: object  # scipy.sparse.csr_matrix
    rhs: np.ndarray
    forms: dict  # linear index -> DerivativeForms
    diagnostics: list = field(default_factory=list)

    @property
    def n_interface(self) -> int:
        return len(self.forms)

    @property
    def scheme_histogram(self) -> dict:
        hist: dict = {}
        for d in self.diagnostics:
            for kind in d["schemes"].values():
                hist[kind] = hist.get(kind, 0) + 1
        return dict(sorted(hist.items()))

    @property
    def max_radius(self) -> int:
        return max((d["radius"] for d in self.diagnostics), default=1)


def _node_fields(grid, signs, problem):
    nodes = grid.nodes()
    sg = signs.sign
    eps = problem.by_sign(problem.epsilon, sg, nodes)
    geps = problem.by_sign(problem.epsilon_grad, sg[..., None], nodes)
    a = problem.by_sign(problem.reaction, sg, nodes)
    f = problem.by_sign(problem.source, sg, nodes)
    return nodes, eps, geps, a, f


def _interior_triplets(grid, mask, eps, geps, a, f):
    h = grid.h
    idx = np.argwhere(mask)
    lin = grid.linear(idx)
    e = eps[mask]
    ge = geps[mask]
    rows = [lin]
    cols = [lin]
    vals = [e * (2 * grid.dim) / h**2 + a[mask]]
    for k in range(grid.dim):
        for s in (-1, 1):
            nb = idx.copy()
            nb[:, k] += s
            rows.append(lin)
            cols.append(grid.linear(nb))
            vals.append(-e / h**2 - s * ge[:, k] / (2 * h))
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), lin, f[mask]


def interface_crossings(grid, surface, signs, points, data):
    """Per interface point, ``{(k, s): (Intersection, JumpValues)}`` computed in one batch."""
    from .mesh import find_intersections

    points = np.asarray(points, dtype=int).reshape(-1, 3)
    bases, axes, dirs, owner = [], [], [], []
    for n, i in enumerate(points):
        own = signs.sign[tuple(i)]
        for k, s in ROW_ORDER:
            j = i.copy()
            j[k] += s
            if signs.sign[tuple(j)] != own:
                bases.append(i)
                axes.append(k)
                dirs.append(s)
                owner.append(n)
    out = [dict() for _ in range(len(points))]
    if not bases:
        return out
    inters = find_intersections(grid, surface, signs, bases, axes, dirs)
    vals = data.values(
        np.array([x.location for x in inters]),
        np.array([x.geometry.normal for x in inters]),
        np.array([x.geometry.normal_jacobian for x in inters]),
    )
    for n, k, s, x, v in zip(owner, axes, dirs, inters, vals):
        out[n][(k, s)] = (x, v)
    return out


def assemble_system(grid, surface, problem, *, threads: int = 1, forced=None, signs=None, data=None) -> Assembly:
    """Assemble the global CCIM system with Dirichlet data from the exact solution.

    Rows are independent, so interface points may be processed by a thread
    pool; results are written back in point order, which keeps the matrix
    identical for any thread count.
    """
    import scipy.sparse as sps

    from .mesh import interface_mask, sign_field

    if signs is None:
        signs = sign_field(grid, surface)
    if data is None:
        data = problem.interface_data()
    nodes, eps, geps, a, f = _node_fields(grid, signs, problem)

    boundary = np.zeros(grid.shape, dtype=bool)
    for k in range(grid.dim):
        sl = [slice(None)] * grid.dim
        sl[k] = 0
        boundary[tuple(sl)] = True
        sl[k] = -1
        boundary[tuple(sl)] = True
    iface = interface_mask(signs)
    interior = ~boundary & ~iface

    rows, cols, vals, int_lin, int_f = _interior_triplets(grid, interior, eps, geps, a, f)
    rhs = np.zeros(grid.size)
    rhs[int_lin] = int_f
    b_lin = np.flatnonzero(boundary.reshape(-1))
    rhs[b_lin] = problem.by_sign(problem.exact, signs.sign.reshape(-1)[b_lin], nodes.reshape(-1, 3)[b_lin])

    points = np.argwhere(iface)
    crossings = interface_crossings(grid, surface, signs, points, data)

    def work(n):
        i = tuple(int(v) for v in points[n])
        _, forms = build_coupling(i, grid, surface, signs, data, crossings=crossings[n], forced=forced)
        row = interface_pde_row(i, grid, forms, eps[i], geps[i], a[i], f[i])
        return i, forms, row

    if threads > 1 and len(points) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, range(len(points))))
    else:
        results = [work(n) for n in range(len(points))]

    forms_by_point = {}
    diagnostics = []
    i_rows, i_cols, i_vals = [], [], []
    for i, forms, row in results:
        lin = int(grid.linear(i))
        forms_by_point[lin] = forms
        i_rows.append(np.full(len(row.columns), lin))
        i_cols.append(row.columns)
        i_vals.append(row.values)
        rhs[lin] = row.rhs
        diagnostics.append(
            {
                "point": i,
                "schemes": {f"{'xyz'[k]}{'xyz'[l]}": s.kind.value for (k, l), s in forms.schemes.items()},
                "condition": forms.condition,
                "radius": forms.radius,
            }
        )

    all_rows = np.concatenate([rows, b_lin, *i_rows]) if i_rows else np.concatenate([rows, b_lin])
    all_cols = np.concatenate([cols, b_lin, *i_cols]) if i_cols else np.concatenate([cols, b_lin])
    all_vals = np.concatenate([vals, np.ones(len(b_lin)), *i_vals]) if i_vals else np.concatenate([vals, np.ones(len(b_lin))])
    matrix = sps.csr_matrix((all_vals, (all_rows, all_cols)), shape=(grid.size, grid.size))
    matrix.sum_duplicates()
    matrix.sort_indices()
    return Assembly(grid, signs, matrix, rhs, forms_by_point, diagnostics)
