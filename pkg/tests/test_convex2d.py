import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from sdotlab.convex2d import (
    Ellipse,
    HalfPlane,
    Polygon,
    Sector,
    area_centroid,
    boundary_cone,
    clip,
    convex_hull,
    dual_cone,
    hausdorff_distance,
    intersect,
    lowner_ellipse,
    rectangle,
    regular_polygon,
    second_moment,
    sector_polygon,
    tangent_cone,
)
from sdotlab.errors import NotAVertex, NotDualizable, PreconditionError

UNIT = rectangle((0, 0), (1, 1))


# ------------------------------------------------------------ oracles


def boundary_samples(p: Polygon, per_edge: int = 2000) -> np.ndarray:
    v = p.vertices
    w = np.roll(v, -1, axis=0)
    t = np.linspace(0, 1, per_edge, endpoint=False)
    return np.concatenate([a + t[:, None] * (b - a) for a, b in zip(v, w)])


def brute_hausdorff(p: Polygon, q: Polygon) -> float:
    """Hausdorff distance of the filled polygons via dense boundary samples.

    For convex sets the farthest point of one set from the other lies on its
    boundary; distances to a filled set are zero inside it.
    """

    def dist_to(points, poly):
        inside = poly.contains(points)
        b = boundary_samples(poly, 400)
        d = np.sqrt(((points[:, None, :] - b[None, :, :]) ** 2).sum(-1)).min(axis=1)
        return np.where(inside, 0.0, d)

    a = boundary_samples(p, 400)
    c = boundary_samples(q, 400)
    return max(dist_to(a, q).max(), dist_to(c, p).max())


def khachiyan(points: np.ndarray, iters: int = 2000):
    """Classical Khachiyan weights; returns the dual lower-bound ellipse (center, shape)."""
    n, d = points.shape
    q = np.vstack([points.T, np.ones(n)])
    u = np.full(n, 1.0 / n)
    for _ in range(iters):
        m = np.einsum("ij,ji->i", q.T, np.linalg.solve((q * u) @ q.T, q))
        j = int(np.argmax(m))
        step = (m[j] - d - 1.0) / ((d + 1.0) * (m[j] - 1.0))
        u = (1.0 - step) * u
        u[j] += step
    c = points.T @ u
    return c, np.linalg.inv((points.T * u) @ points - np.outer(c, c)) / d


def slsqp_ellipse(pts: np.ndarray):
    """Minimum-area ellipse ``|A x + b| <= 1`` by a general constrained optimizer, A = L L^T."""

    def mat(z):
        lo = np.array([[z[0], 0.0], [z[1], z[2]]])
        return lo @ lo.T

    c0 = pts.mean(axis=0)
    r = 2.0 * np.abs(pts - c0).max()
    z0 = np.array([1 / r, 0.0, 1 / r, 0.0, 0.0])
    z0[3:] = -mat(z0) @ c0
    cons = {"type": "ineq", "fun": lambda z: 1.0 - ((pts @ mat(z) + z[3:]) ** 2).sum(axis=1)}
    res = minimize(lambda z: -2.0 * math.log(abs(z[0] * z[2])), z0, constraints=[cons], method="SLSQP", options={"ftol": 1e-15, "maxiter": 1000})
    a = mat(res.x)
    return -np.linalg.solve(a, res.x[3:]), math.pi / np.linalg.det(a)


def grid_ellipse_axes(pts: np.ndarray, grid: int = 801):
    """Smallest-area centered axis-aligned ellipse containing ``pts`` by scanning ``a``."""
    best = (math.inf, 0.0, 0.0)
    x2, y2 = pts[:, 0] ** 2, pts[:, 1] ** 2
    amin = np.sqrt(x2.max())
    for a in np.linspace(amin * 1.0001, 6.0 * amin, grid):
        room = 1.0 - x2 / a**2
        b = math.sqrt(float(np.max(y2 / room)))
        if a * b < best[0]:
            best = (a * b, a, b)
    return best[1], best[2]


# -------------------------------------------------------------- clipping


def test_clip_axis_aligned():
    p = clip(UNIT, HalfPlane([1, 0], 0.5))
    assert p.area == pytest.approx(0.5, abs=1e-14)
    assert hausdorff_distance(p, rectangle((0, 0), (0.5, 1))) < 1e-14


def test_clip_no_op():
    p = clip(UNIT, HalfPlane([1, 0], 2.0))
    assert hausdorff_distance(p, UNIT) == 0.0


def test_clip_corner_triangle():
    p = clip(UNIT, HalfPlane([1, 1], 0.5))
    a, c = area_centroid(p)
    assert a == pytest.approx(0.125, abs=1e-14)
    np.testing.assert_allclose(c, [1 / 6, 1 / 6], atol=1e-14)


def test_clip_to_empty():
    assert clip(UNIT, HalfPlane([1, 0], -1.0)).is_empty


def test_area_centroid_examples():
    a, c = area_centroid(UNIT)
    assert a == 1.0
    np.testing.assert_allclose(c, [0.5, 0.5])
    a, c = area_centroid(Polygon([[0, 0], [1, 0], [0, 1]]))
    assert a == pytest.approx(0.5)
    np.testing.assert_allclose(c, [1 / 3, 1 / 3])


def test_polygon_orientation_normalized():
    cw = Polygon([[0, 0], [0, 1], [1, 1], [1, 0]])
    assert cw.area == pytest.approx(1.0)
    assert cw.is_convex()


def test_second_moment_square():
    m = second_moment(rectangle((-1, -1), (1, 1)))
    np.testing.assert_allclose(m, np.diag([4 / 3, 4 / 3]), atol=1e-14)


@settings(max_examples=60, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0, 2 * math.pi), st.floats(-0.9, 0.9))
def test_clip_area_matches_monte_carlo_split(cx, cy, ang, off):
    # the two halves of a clip partition the polygon
    p = regular_polygon(7, 1.0, (cx, cy), 0.3)
    n = np.array([math.cos(ang), math.sin(ang)])
    h = HalfPlane(n, float(n @ [cx, cy]) + off)
    a = clip(p, h).area + clip(p, h.complement()).area
    assert a == pytest.approx(p.area, rel=1e-12)


def test_intersect_squares():
    p = intersect(UNIT, rectangle((0.5, 0.5), (2, 2)))
    assert p.area == pytest.approx(0.25)


def test_convex_hull_drops_interior(rng):
    pts = np.vstack([rng.random((50, 2)), [[0, 0], [1, 0], [1, 1], [0, 1]]])
    assert hausdorff_distance(convex_hull(pts), UNIT) < 1e-12


# -------------------------------------------------------------- Hausdorff


def test_hausdorff_examples():
    assert hausdorff_distance(UNIT, UNIT) == 0.0
    assert hausdorff_distance(UNIT, rectangle((0, 0), (2, 1))) == pytest.approx(1.0)


def test_hausdorff_shifted_square_against_brute_force():
    q = rectangle((0.1, 0.1), (1.1, 1.1))
    exact = hausdorff_distance(UNIT, q)
    assert exact == pytest.approx(brute_hausdorff(UNIT, q), abs=1e-3)
    assert exact == pytest.approx(0.1 * math.sqrt(2), abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(3, 9), st.floats(0.3, 2), st.floats(-1, 1), st.floats(-1, 1), st.floats(0, 3))
def test_hausdorff_random_against_brute_force(k, r, dx, dy, phase):
    p = regular_polygon(5, 1.0)
    q = regular_polygon(k, r, (dx, dy), phase)
    assert hausdorff_distance(p, q) == pytest.approx(brute_hausdorff(p, q), abs=5e-3)


def test_hausdorff_empty_raises():
    with pytest.raises(PreconditionError):
        hausdorff_distance(UNIT, Polygon.empty())


# ------------------------------------------------------------------ cones


def test_dual_cone_examples():
    q = dual_cone(Sector(0, math.pi / 2))
    assert (q.theta_lo, q.span) == pytest.approx((0, math.pi / 2))
    d = dual_cone(Sector(-math.pi / 3, math.pi / 3))
    assert (d.theta_lo, d.theta_hi) == pytest.approx((-math.pi / 6, math.pi / 6))
    ray = dual_cone(Sector(0, math.pi))
    assert ray.span == pytest.approx(0.0, abs=1e-15)
    assert ray.theta_lo == pytest.approx(math.pi / 2)
    with pytest.raises(NotDualizable):
        dual_cone(Sector(0, 1.2 * math.pi))


@settings(max_examples=50, deadline=None)
@given(st.floats(-math.pi, math.pi), st.floats(0.05, math.pi))
def test_dual_cone_inner_product_grid(lo, span):
    s = Sector(lo, lo + span)
    d = dual_cone(s)
    x = s.sample_rays(25)
    y = d.sample_rays(25)
    assert (x @ y.T).min() >= -1e-12
    # just outside the dual some direction of s has a negative product
    for t in (d.theta_lo - 1e-3, d.theta_hi + 1e-3):
        out = np.array([math.cos(t), math.sin(t)])
        assert (x @ out).min() < 0


def test_tangent_cone_examples():
    t = tangent_cone(UNIT, 0)
    assert (t.theta_lo, t.span) == pytest.approx((0, math.pi / 2))
    hexagon = regular_polygon(6)
    for v in range(6):
        assert tangent_cone(hexagon, v).span == pytest.approx(2 * math.pi / 3)
    tri = Polygon([[0, 0], [2, 0], [0, 1]])
    t = tangent_cone(tri, [0.0, 0.0])
    assert (t.theta_lo, t.span) == pytest.approx((0, math.pi / 2))
    with pytest.raises(NotAVertex):
        tangent_cone(UNIT, [0.5, 0.0])


def test_boundary_cone_edge_interior_outside():
    e = boundary_cone(UNIT, [0.5, 0.0])
    assert (e.theta_lo, e.span) == pytest.approx((0, math.pi))
    assert boundary_cone(UNIT, [0.5, 0.5]) is None
    assert boundary_cone(UNIT, [0.0, 0.0]).span == pytest.approx(math.pi / 2)
    with pytest.raises(PreconditionError):
        boundary_cone(UNIT, [2.0, 0.5])


def test_sector_polygon_apex_cone():
    p = sector_polygon(math.radians(20), math.radians(70), 1.5, 16)
    t = tangent_cone(p, [0, 0])
    assert (math.degrees(t.theta_lo), math.degrees(t.theta_hi)) == pytest.approx((20, 70))


# --------------------------------------------------------------- ellipses


def test_lowner_square_is_circumdisk():
    e = lowner_ellipse(rectangle((-1, -1), (1, 1)))
    np.testing.assert_allclose(e.center, 0, atol=1e-9)
    np.testing.assert_allclose(e.axes()[0], [math.sqrt(2)] * 2, rtol=1e-8)


def test_lowner_rectangle_against_grid_search():
    rect = rectangle((-2, -1), (2, 1))
    e = lowner_ellipse(rect)
    a, b = grid_ellipse_axes(rect.vertices, 4001)
    got = e.axes()[0]
    np.testing.assert_allclose(got, [a, b], rtol=2e-3)
    np.testing.assert_allclose(got, [2 * math.sqrt(2), math.sqrt(2)], rtol=1e-8)


def test_lowner_equilateral_is_circumcircle():
    tri = regular_polygon(3, 1.3, (0.2, -0.1), 0.4)
    e = lowner_ellipse(tri)
    np.testing.assert_allclose(e.center, [0.2, -0.1], atol=1e-8)
    np.testing.assert_allclose(e.axes()[0], [1.3, 1.3], rtol=1e-8)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_lowner_matches_optimizer_oracle(seed):
    pts = np.random.default_rng(seed).normal(size=(40, 2)) @ [[1.0, 0.3], [0.0, 0.6]]
    e = lowner_ellipse(pts)
    hull = convex_hull(pts).vertices
    c, area = slsqp_ellipse(hull)
    np.testing.assert_allclose(e.center, c, atol=1e-6)
    assert e.area == pytest.approx(area, rel=1e-8)
    assert e.contains(pts, 1e-9).all()
    # Khachiyan's dual ellipse bounds the optimum from below; scaled to contain the points, from above
    kc, ka = khachiyan(hull)
    lower = math.pi / math.sqrt(np.linalg.det(ka))
    grow = max(1.0, float(np.max(np.einsum("ij,jk,ik->i", hull - kc, ka, hull - kc))))
    assert lower * (1 - 1e-12) <= e.area <= lower * grow * (1 + 1e-12)


def test_lowner_many_cocircular_vertices():
    p = regular_polygon(150, 0.7, (1, 2), 0.01)
    e = lowner_ellipse(p)
    np.testing.assert_allclose(e.axes()[0], [0.7, 0.7], rtol=1e-6)


def test_ellipse_normalization_maps_to_disk():
    e = Ellipse([1, 2], [[4.0, 1.0], [1.0, 1.0]])
    a = e.normalization()
    z = (e.boundary(64) - e.center) @ a.T
    np.testing.assert_allclose(np.linalg.norm(z, axis=1), 1.0, rtol=1e-12)
