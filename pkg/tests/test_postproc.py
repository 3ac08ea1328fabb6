import csv

import numpy as np
import pytest

from ccim.affine import CONST, GridValue
from ccim.coupling import assemble_system
from ccim.mesh import build_grid
from ccim.postproc import (
    CSV_COLUMNS,
    ErrorReport,
    error_report,
    fit_slope,
    gradient_jump_normal,
    interface_gradients,
    local_values,
    write_convergence_csv,
)
from ccim.problems import quadratic_oracle


@pytest.fixture(scope="module")
def exact_quadratic(sphere_grid):
    grid, surface, signs = sphere_grid
    prob = quadratic_oracle()
    asm = assemble_system(grid, surface, prob, signs=signs)
    u = prob.by_sign(prob.exact, signs.sign, grid.nodes())
    return asm, u, prob


def test_fit_slope_exact_power_law():
    """[TRIVIAL] e = 3 N^-2 has slope -2."""
    pts = [(n, 3.0 * n**-2.0) for n in (20, 40, 80, 160)]
    assert fit_slope(pts) == pytest.approx(-2.0)


def test_fit_slope_with_noise(rng):
    ns = np.array([20, 40, 80, 160, 320])
    errs = 0.5 * ns**-2.0 * (1 + 0.05 * rng.uniform(-1, 1, len(ns)))
    assert fit_slope(zip(ns, errs)) == pytest.approx(-2.0, abs=0.1)


@pytest.mark.parametrize("pts", [[(10, 1.0), (20, 0.5)], [(10, 1.0), (20, 0.0), (40, 0.1)], [(-1, 1.0), (2, 1.0), (3, 1.0)]])
def test_fit_slope_rejects(pts):
    with pytest.raises(ValueError):
        fit_slope(pts)


def test_error_report_rejects_negative():
    with pytest.raises(ValueError):
        ErrorReport(-1.0, 0.0)


def test_local_values_layout():
    grid = build_grid(4)
    u = np.arange(grid.size, dtype=float)
    v = local_values(grid, u, (0, 2, 2))
    assert v[CONST] == 1.0
    assert v[GridValue((0, 0, 0)).slot] == grid.linear((0, 2, 2))
    assert v[GridValue((1, 0, 0)).slot] == grid.linear((1, 2, 2))
    assert v[GridValue((-1, 0, 0)).slot] == 0.0


def test_exact_quadratic_has_zero_errors(exact_quadratic):
    """[DERIVED] gradients are recovered exactly from exact nodal values of a quadratic."""
    asm, u, prob = exact_quadratic
    rep = error_report(asm, u, prob)
    assert rep.err_u_inf == 0.0
    assert rep.err_grad_inf < 1e-8
    assert len(rep.gradients) > 0


def test_gradients_satisfy_flux_condition(exact_quadratic):
    """[DERIVED] eps+ grad u+ . n - eps- grad u- . n equals sigma at every crossing."""
    asm, u, prob = exact_quadratic
    for rec, gm, gp in interface_gradients(asm, u):
        n = rec.intersection.geometry.normal
        eps = rec.values.eps
        assert eps[1] * gp @ n - eps[0] * gm @ n == pytest.approx(rec.values.sigma, abs=1e-8)
        jump_n = gradient_jump_normal(rec.intersection, (gm, gp))
        assert jump_n == pytest.approx((gp - gm) @ n)
        # tangential jump comes from tau alone
        t_jump = (gp - gm) - jump_n * n
        assert np.allclose(t_jump, rec.values.grad_tau - (rec.values.grad_tau @ n) * n, atol=1e-9)


def test_each_crossing_reported_once(exact_quadratic):
    asm, u, _ = exact_quadratic
    recs = interface_gradients(asm, u)
    assert all(r.side < 0 for r, _, _ in recs)
    locs = {tuple(np.round(r.intersection.location, 12)) for r, _, _ in recs}
    assert len(locs) == len(recs)


def test_write_convergence_csv(tmp_path):
    rows = [dict(zip(CSV_COLUMNS, (20, 0.1, 1e-3, 1e-2, 10, 0.5, 0.1)), extra="ignored")]
    path = tmp_path / "c.csv"
    write_convergence_csv(path, rows)
    with open(path) as fh:
        got = list(csv.DictReader(fh))
    assert list(got[0]) == list(CSV_COLUMNS)
    assert got[0]["N"] == "20"
