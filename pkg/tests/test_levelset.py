from pathlib import Path

import numpy as np
import pytest
import sympy as sp

from ccim.levelset import (
    CATALOG,
    Atom,
    ExprSurface,
    catalog_surface,
    geometry_at,
    geometry_batch,
    molecular_surface,
    parse_pqr,
    scale_to_box,
)

DATA = Path(__file__).parent / "data"
x, y, z = sp.symbols("x y z", real=True)

ANALYTIC = ["ellipsoid", "peanut", "donut", "banana", "popcorn", "sphere"]


def surface_points(surface, rng, count, inside=(0.0, 0.0, 0.0)):
    """Points on ``phi = 0`` found by bisection along random rays from an inside point."""
    origin = np.asarray(inside, dtype=float)
    dirs = rng.normal(size=(count, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    lo = np.zeros(count)
    hi = np.full(count, 1.0)
    # shrink hi to the first sign change on a coarse scan
    ts = np.linspace(0.0, 1.0, 201)[1:]
    vals = surface.phi(origin + ts[None, :, None] * dirs[:, None, :])
    first = np.argmax(vals > 0, axis=1)
    ok = vals[np.arange(count), first] > 0
    hi = ts[first]
    lo = np.maximum(hi - ts[0], 0.0)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        inside_mid = surface.phi(origin + mid[:, None] * dirs) < 0
        lo = np.where(inside_mid, mid, lo)
        hi = np.where(inside_mid, hi, mid)
    return (origin + hi[:, None] * dirs)[ok]


def inside_point(name):
    return {"banana": (0.125, 0.0, 0.0), "donut": (0.6, 0.0, 0.0)}.get(name, (0.0, 0.0, 0.0))


def test_catalog_spot_values():
    assert catalog_surface("ellipsoid").phi(np.zeros(3)) == pytest.approx(-1.3)
    assert catalog_surface("donut").phi(np.array([1.0, 0.0, 0.0])) == pytest.approx(0.0, abs=1e-15)
    peanut = catalog_surface("peanut")
    # sin(2 theta) sin(psi) vanishes on the coordinate planes y=0 and z=0
    for p in ([0.5, 0.0, 0.0], [0.3, 0.4, 0.0], [0.0, 0.0, 0.5], [0.3, 0.0, -0.4]):
        assert peanut.phi(np.array(p)) == pytest.approx(0.0, abs=1e-15)
    assert catalog_surface("eight_balls").phi(np.array([0.5, 0.5, 0.5])) == pytest.approx(-0.3)
    assert catalog_surface("sphere", radius=0.3).phi(np.array([0.3, 0.0, 0.0])) == pytest.approx(0.0)


def test_unknown_surface():
    with pytest.raises(ValueError, match="unknown surface"):
        catalog_surface("teapot")


def test_banana_roots_found_by_ray_shooting(rng):
    s = catalog_surface("banana")
    pts = surface_points(s, rng, 50, inside_point("banana"))
    assert len(pts) > 20
    scale = np.linalg.norm(s.grad(pts), axis=1)
    assert np.all(np.abs(s.phi(pts)) <= 1e-9 * scale)


@pytest.mark.parametrize("name", ANALYTIC + ["eight_balls"])
def test_gradient_matches_central_differences(name, rng):
    s = catalog_surface(name)
    inside = (0.5, 0.5, 0.5) if name == "eight_balls" else inside_point(name)
    pts = surface_points(s, rng, 10, inside)
    d = 1e-6
    for p in pts:
        fd = np.array([(s.phi(p + d * e) - s.phi(p - d * e)) / (2 * d) for e in np.eye(3)])
        assert np.allclose(s.grad(p), fd, atol=1e-6 * max(1.0, np.abs(fd).max()))
        fdh = np.array([(s.grad(p + d * e) - s.grad(p - d * e)) / (2 * d) for e in np.eye(3)]).T
        H = s.hess(p)
        assert np.allclose(H, H.T, atol=1e-12 * max(1.0, np.abs(H).max()))
        assert np.allclose(H, fdh, atol=1e-5 * max(1.0, np.abs(fdh).max()))


@pytest.mark.parametrize("name", ANALYTIC)
def test_geometry_invariants(name, rng):
    s = catalog_surface(name)
    pts = surface_points(s, rng, 300, inside_point(name))
    # jitter off the surface into a thin tube
    pts = pts + 0.01 * rng.uniform(-1, 1, size=pts.shape)
    for g in geometry_batch(s, pts):
        frame = np.vstack([g.normal, g.tangents])
        assert np.allclose(frame @ frame.T, np.eye(3), atol=1e-8)
        assert np.allclose(g.normal @ g.normal_jacobian, 0.0, atol=1e-8 * max(1.0, np.abs(g.normal_jacobian).max()))


def test_normal_jacobian_matches_differenced_normal(rng):
    s = catalog_surface("ellipsoid")
    p = surface_points(s, rng, 5)[0]
    d = 1e-6
    unit = lambda q: s.grad(q) / np.linalg.norm(s.grad(q))  # noqa: E731
    fd = np.array([(unit(p + d * e) - unit(p - d * e)) / (2 * d) for e in np.eye(3)]).T
    assert np.allclose(geometry_at(s, p).normal_jacobian, fd, atol=1e-6)


def test_ellipsoid_normal_direction(rng):
    s = catalog_surface("ellipsoid")
    for p in surface_points(s, rng, 10):
        n = np.array([4 * p[0], 6 * p[1], 12 * p[2]])
        assert np.allclose(geometry_at(s, p).normal, n / np.linalg.norm(n), atol=1e-12)


def test_plane_geometry():
    g = geometry_at(ExprSurface(x, "plane"), np.array([0.0, 0.3, -0.2]))
    assert np.allclose(g.normal, [1, 0, 0])
    assert np.allclose(g.normal_jacobian, 0)
    assert np.allclose(g.tangents, [[0, 1, 0], [0, 0, 1]])


def test_tangent_frame_rule_picks_least_aligned_axes():
    s = ExprSurface(3 * x + y + 0.5 * z, "tilted")
    g = geometry_at(s, np.zeros(3))
    # |n| components ordered z < y < x: tangents come from e_y then e_z
    e_y = np.array([0.0, 1.0, 0.0])
    t0 = e_y - (e_y @ g.normal) * g.normal
    assert np.allclose(g.tangents[0], t0 / np.linalg.norm(t0))


def test_vanishing_gradient_is_configuration_error():
    with pytest.raises(ValueError, match="gradient vanishes"):
        geometry_at(catalog_surface("ellipsoid"), np.zeros(3))


def test_parse_pqr_record(tmp_path):
    f = tmp_path / "one.pqr"
    f.write_text("REMARK test\nATOM 1 N ALA 1 0.0 0.0 0.0 -0.3 1.55\nTER\nEND\n")
    (atom,) = parse_pqr(f)
    assert np.allclose(atom.position, 0.0)
    assert atom.radius == 1.55
    assert atom.charge == -0.3


@pytest.mark.parametrize(
    "text,match",
    [
        ("ATOM 1 N ALA 1 0.0 0.0 zero -0.3 1.55\n", ":1:"),
        ("REMARK\nATOM 1 N\n", ":2:"),
        ("REMARK only\n", "no ATOM"),
    ],
)
def test_parse_pqr_errors(tmp_path, text, match):
    f = tmp_path / "bad.pqr"
    f.write_text(text)
    with pytest.raises(ValueError, match=match):
        parse_pqr(f)


def test_bundled_pqr_parses_every_record():
    atoms = parse_pqr(DATA / "1A1P_amber.pqr")
    records = [ln for ln in (DATA / "1A1P_amber.pqr").read_text().splitlines() if ln.startswith(("ATOM", "HETATM"))]
    assert len(atoms) == len(records) == 205
    assert min(a.radius for a in atoms) == 0.0


def test_atom_radius_validation():
    Atom((0, 0, 0), 0.0)
    with pytest.raises(ValueError):
        Atom((0, 0, 0), -1.0)


def test_scale_to_box_examples():
    (one,) = scale_to_box([Atom((3.0, -2.0, 5.0), 1.0)])
    assert one.radius == pytest.approx(0.8)
    assert np.allclose(one.position, 0.0)
    a, b = scale_to_box([Atom((10, 0, 0), 1.0), Atom((-10, 0, 0), 1.0)])
    assert np.allclose(a.position, -b.position)
    atoms = scale_to_box(parse_pqr(DATA / "1A1P_amber.pqr"))
    extent = max(np.abs(at.position).max() + at.radius for at in atoms)
    assert extent == pytest.approx(0.8)


def test_molecular_surface_monotone_and_derivatives(rng):
    atoms = [Atom(rng.uniform(-0.4, 0.4, 3), r) for r in rng.uniform(0.15, 0.3, 6)]
    pts = rng.uniform(-0.8, 0.8, size=(200, 3))
    small = molecular_surface(atoms[:5])
    big = molecular_surface(atoms)
    assert np.all(big.phi(pts) <= small.phi(pts))
    d = 1e-6
    for p in pts[:10]:
        fd = np.array([(big.phi(p + d * e) - big.phi(p - d * e)) / (2 * d) for e in np.eye(3)])
        assert np.allclose(big.grad(p), fd, atol=1e-5 * max(1.0, np.abs(fd).max()))
        fdh = np.array([(big.grad(p + d * e) - big.grad(p - d * e)) / (2 * d) for e in np.eye(3)]).T
        assert np.allclose(big.hess(p), fdh, atol=1e-4 * max(1.0, np.abs(fdh).max()))


def test_zero_radius_atoms_do_not_shape_the_surface():
    base = [Atom((0, 0, 0), 0.3)]
    with_h = base + [Atom((0.6, 0, 0), 0.0)]
    p = np.array([[0.6, 0.0, 0.0], [0.2, 0.1, 0.0]])
    assert np.array_equal(molecular_surface(with_h).phi(p), molecular_surface(base).phi(p))


def test_catalog_complete():
    assert set(CATALOG) == {"eight_balls", "ellipsoid", "peanut", "donut", "banana", "popcorn", "sphere"}


def test_peanut_origin_is_inside():
    """yz/r^2 has no limit at 0; every direction gives phi in [-0.7, -0.3]."""
    import warnings

    s = catalog_surface("peanut")
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        val = s.phi(np.zeros((1, 3)))
    assert val[0] == -0.5
    assert np.all(s.phi(1e-9 * np.eye(3)) < 0)
