import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from ccim.levelset import ExprSurface, catalog_surface
from ccim.mesh import (
    PERTURB,
    Grid,
    PointKind,
    build_grid,
    check_single_crossing,
    classify_point,
    find_intersection,
    find_intersections,
    interface_mask,
    perturb_nodal,
    sign_field,
)

x, y, z = sp.symbols("x y z", real=True)


def plane(offset=0.0):
    return ExprSurface(x - offset, "plane")


@pytest.mark.parametrize("N,h,count", [(50, 0.04, 51**3), (2, 1.0, 27), (100, 0.02, 101**3)])
def test_build_grid(N, h, count):
    g = build_grid(N)
    assert g.h == pytest.approx(h)
    assert g.size == count
    assert g.h * g.N == 2.0


@pytest.mark.parametrize("bad", [1, 0, -3, 2.5])
def test_build_grid_rejects(bad):
    with pytest.raises(ValueError):
        build_grid(bad)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 12), st.data())
def test_linear_multi_bijection(N, data):
    g = Grid(N)
    idx = tuple(data.draw(st.integers(0, N)) for _ in range(3))
    assert g.multi(g.linear(idx)) == idx
    lin = data.draw(st.integers(0, g.size - 1))
    assert int(g.linear(g.multi(lin))) == lin


def test_coords_and_nodes_agree():
    g = build_grid(8)
    assert np.allclose(g.nodes()[3, 5, 7], g.coords((3, 5, 7)))
    assert np.allclose(g.coords((0, 8, 4)), [-1.0, 1.0, 0.0])


def test_perturbation_pushes_zeros_inside():
    h = 0.1
    phi = perturb_nodal(np.array([0.0, 1e-13, -1e-13, 0.5]), h)
    assert phi[0] == -PERTURB * h
    assert phi[1] == PERTURB * h
    assert phi[2] == -PERTURB * h
    assert phi[3] == 0.5


def test_classify_examples():
    g = build_grid(50)
    signs = sign_field(g, plane(0.5))
    assert classify_point(g, signs, (25, 25, 25)) is PointKind.INTERIOR
    signs = sign_field(g, plane(-0.02))  # interface halfway between x=-0.04 and x=0
    assert classify_point(g, signs, (24, 25, 25)) is PointKind.INTERFACE
    ball = catalog_surface("sphere", radius=0.3, centre=(0.5, 0.5, 0.5))
    signs = sign_field(g, ball)
    # x = (0.76, 0.48, 0.48) is inside, its +x neighbour (0.80, 0.48, 0.48) outside
    assert classify_point(g, signs, (44, 37, 37)) is PointKind.INTERFACE
    assert classify_point(g, signs, (37, 37, 37)) is PointKind.INTERIOR


def test_classify_rejects_boundary():
    g = build_grid(10)
    signs = sign_field(g, plane())
    with pytest.raises(ValueError):
        classify_point(g, signs, (0, 3, 3))


def test_interface_mask_matches_classification(sphere_grid):
    g, _, signs = sphere_grid
    mask = interface_mask(signs)
    for i in [(10, 10, 15), (10, 10, 10), (5, 10, 10), (14, 10, 10), (15, 10, 10), (13, 13, 10)]:
        assert mask[i] == (classify_point(g, signs, i) is PointKind.INTERFACE)


def test_classification_symmetric_under_sign_flip():
    # radius chosen so no node lies on the sphere (ties would go inside both times)
    g = build_grid(20)
    surface = catalog_surface("sphere", radius=0.47)
    signs = sign_field(g, surface)
    flipped = sign_field(g, phi=-surface.phi(g.nodes()))
    assert np.array_equal(interface_mask(signs), interface_mask(flipped))
    assert np.all(flipped.sign[signs.sign < 0] == 1)


@pytest.mark.parametrize(
    "surface,i,alpha",
    [
        (plane(-0.02), (24, 25, 25), 0.5),
        (plane(0.01), (25, 25, 25), 0.25),
        (catalog_surface("sphere", radius=0.5), (37, 25, 25), 0.5),
    ],
)
def test_find_intersection_examples(surface, i, alpha):
    g = build_grid(50)
    hit = find_intersection(g, surface, i, 0, 1, signs=sign_field(g, surface))
    assert hit.alpha == pytest.approx(alpha, abs=1e-12)
    assert hit.alpha + hit.beta == 1.0
    assert abs(surface.phi(hit.location)) < 1e-12


def test_find_intersection_none_without_sign_change():
    g = build_grid(10)
    assert find_intersection(g, plane(0.5), (2, 5, 5), 0, 1) is None


def test_intersections_direction_consistent():
    g = build_grid(20)
    surface = catalog_surface("sphere", radius=0.47)
    signs = sign_field(g, surface)
    pts = np.argwhere(interface_mask(signs) & (signs.sign < 0))[:40]
    for i in pts:
        for k in range(3):
            for s in (-1, 1):
                fwd = find_intersections(g, surface, signs, [i], [k], [s], with_geometry=False)[0]
                if fwd is None:
                    continue
                j = i.copy()
                j[k] += s
                back = find_intersections(g, surface, signs, [j], [k], [-s], with_geometry=False)[0]
                assert back.alpha == pytest.approx(fwd.beta, abs=1e-12)
                lip = abs(signs.phi[tuple(i)] - signs.phi[tuple(j)]) / g.h
                assert abs(surface.phi(fwd.location)) <= 1e-12 * max(lip, 1.0)


def test_single_crossing_diagnostic_warns(caplog):
    g = build_grid(4)
    wavy = ExprSurface(sp.sin(40 * x), "wavy")
    assert check_single_crossing(g, plane(0.1), (2, 2, 2), 0, 1)
    assert not check_single_crossing(g, wavy, (2, 2, 2), 0, 1)
    assert "crosses the interface" in caplog.text
