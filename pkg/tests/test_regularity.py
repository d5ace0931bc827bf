import math

import numpy as np
import pytest
from scipy.integrate import quad

from sdotlab.convex2d import Sector, hausdorff_distance, rectangle, regular_polygon, sector_polygon
from sdotlab.errors import CenteringFailure, FitDomainError, PreconditionError
from sdotlab.measures import Uniform
from sdotlab.regularity import (
    ROUND,
    HomogeneousPotential,
    base_point,
    blowup_rescale,
    centered_section,
    chi_trace,
    excess,
    exponent_fit,
    extrinsic_ball,
    homogeneity_defect,
    obliqueness_check,
    proxy_profile,
    radius_window,
    roundness_profile,
    sandwich_defects,
    section,
    trusted_window,
    v_section_proxy,
)
from sdotlab.sdot import TargetCloud, potential_eval, sample_target, solve


@pytest.fixture(scope="module")
def centre(identity_plan):
    return base_point(identity_plan, [0.0, 0.0])


@pytest.fixture(scope="module")
def linear_plan():
    a = np.diag([2.0, 0.5])
    sq = rectangle((-1, -1), (1, 1))
    g = Uniform(0.25)
    cloud = sample_target(sq.transformed(a), g, 1200, seed=2, snap_boundary=True)
    return solve(sq, g, cloud, seed=2)


def brute_section_area(plan, base, h, n: int = 400) -> float:
    lo, hi = plan.source.bbox()
    t = np.linspace(0, 1, n)
    x, y = np.meshgrid(lo[0] + (hi[0] - lo[0]) * t, lo[1] + (hi[1] - lo[1]) * t)
    pts = np.column_stack([x.ravel(), y.ravel()])
    return float(np.mean(excess(plan, base, pts) <= h) * np.prod(hi - lo))


# ------------------------------------------------------------ base points


def test_base_point_subgradient(identity_plan, centre):
    x = np.random.default_rng(0).uniform(-1, 1, (5000, 2))
    assert excess(identity_plan, centre, x).min() >= -1e-12
    with pytest.raises(PreconditionError):
        base_point(identity_plan, [3.0, 0.0])


def test_pinned_corner(quadrant_plan):
    bp = base_point(quadrant_plan, [0.0, 0.0], pin_origin=True)
    assert bp.how == "pinned"
    np.testing.assert_array_equal(bp.p0, [0.0, 0.0])
    assert bp.u0 == 0.0


# ---------------------------------------------------------------- sections


def test_identity_section_is_a_disk(identity_plan, centre):
    h = 0.01
    s, saturated = section(identity_plan, centre, h)
    assert not saturated
    disk = regular_polygon(512, math.sqrt(2 * h), centre.x0)
    assert hausdorff_distance(s, disk) <= 2 / math.sqrt(len(identity_plan.cloud))
    assert s.area == pytest.approx(brute_section_area(identity_plan, centre, h), rel=0.05)


def test_sections_nest(identity_plan, centre):
    a, _ = section(identity_plan, centre, 0.01)
    b, _ = section(identity_plan, centre, 0.03)
    assert b.contains(a.vertices, 1e-12).all()


def test_one_site_section_is_domain():
    sq = rectangle((0, 0), (1, 1))
    plan = solve(sq, Uniform(1.0), TargetCloud([[0.5, 0.5]], [1.0]))
    bp = base_point(plan, [0.5, 0.5])
    s, saturated = section(plan, bp, 1e-3)
    assert saturated
    assert hausdorff_distance(s, sq) < 1e-12


def test_centered_interior_section(identity_plan):
    x0 = np.array([0.2, 0.1])
    cs = centered_section(identity_plan, x0, 0.02)
    np.testing.assert_allclose(cs.polygon.centroid, x0, atol=1e-3 * cs.polygon.diameter())
    # p is close to grad u(x0) = x0 for the identity map
    assert np.linalg.norm(cs.slope - x0) <= 2 / math.sqrt(len(identity_plan.cloud))


def test_centered_corner_section(quadrant_plan):
    bp = base_point(quadrant_plan, [0.0, 0.0], pin_origin=True)
    cs = centered_section(quadrant_plan, [0.0, 0.0], 0.005, base=bp)
    np.testing.assert_allclose(cs.polygon.centroid, [0, 0], atol=1e-3 * cs.polygon.diameter())
    # the extension is flat on the negative quadrant, so the section is bounded
    # there only when -p.x grows away from the corner: p points along (+1, +1)
    assert cs.slope[0] > 0 and cs.slope[1] > 0
    assert cs.slope[0] == pytest.approx(cs.slope[1], rel=0.2)
    assert not quadrant_plan.source.contains(cs.polygon.vertices).all()


def test_centering_fails_when_saturated(identity_plan, centre):
    with pytest.raises(CenteringFailure):
        centered_section(identity_plan, [0.0, 0.0], 50.0, base=centre, max_iter=5)


# ----------------------------------------------------------- extrinsic balls


def test_extrinsic_ball_is_a_disk(identity_plan, centre):
    r = 0.3
    pieces = extrinsic_ball(identity_plan, centre, r)
    area = sum(p.area for _, p in pieces)
    assert area == pytest.approx(math.pi * r * r, rel=0.1)
    # as r -> 0 only the cells touching x0 remain (each contributes a half-plane through x0)
    vals = identity_plan.sites @ centre.x0 - identity_plan.weights
    touching = set(np.flatnonzero(vals >= centre.u0 - 1e-9).tolist())
    tiny = extrinsic_ball(identity_plan, centre, 1e-6)
    assert tiny and {i for i, _ in tiny} <= touching
    areas = [sum(p.area for _, p in extrinsic_ball(identity_plan, centre, r)) for r in (0.05, 0.1, 0.2)]
    assert areas == sorted(areas)


def test_sandwich_holds_exactly(identity_plan, centre):
    for r in (0.15, 0.25, 0.35):
        inner, outer, area = sandwich_defects(identity_plan, centre, r)
        assert inner <= 1e-6 * area and outer <= 1e-6 * area


# --------------------------------------------------------------------- chi


def test_chi_exponent_values():
    q = HomogeneousPotential.quadratic(np.eye(2), Sector(0, math.pi / 2))
    assert chi_trace(q, None, None, 0, 0, [0.1, 1.0]).exponent_used == 2.0
    assert chi_trace(q, None, None, 0, 1, [0.1, 1.0]).exponent_used == pytest.approx(2.4)


@pytest.mark.parametrize("angle", [60, 90, 135])
def test_chi_constant_on_homogeneous_potentials(angle):
    m = np.diag([1.3, 1 / 1.3])
    lo = math.radians(10)
    q = HomogeneousPotential.quadratic(m, Sector(lo, lo + math.radians(angle)))
    tr = chi_trace(q, None, None, 0, 0, np.geomspace(1e-3, 1, 30))
    assert tr.relative_variation <= 1e-6
    # D_r = {x.Qx <= r^2}, so chi = 1/2 int dtheta / (e.Q e) over the sector
    exact = 0.5 * quad(lambda t: 1 / (m[0, 0] * math.cos(t) ** 2 + m[1, 1] * math.sin(t) ** 2), lo, lo + math.radians(angle), epsabs=1e-14)[0]
    np.testing.assert_allclose(tr.chi, exact, rtol=1e-10)


def test_chi_quadrant_closed_form():
    q = HomogeneousPotential.quadratic(np.eye(2), Sector(0, math.pi / 2))
    tr = chi_trace(q, None, None, 0, 0, [0.5])
    # D_r = {|x|^2 <= r^2} in the quadrant: area pi r^2 / 4
    assert tr.chi[0] == pytest.approx(math.pi / 4, rel=1e-12)


def test_chi_monotone_on_identity(identity_plan, centre):
    lo, hi = radius_window(identity_plan, centre)
    tr = chi_trace(identity_plan, centre, None, 0, 0, np.geomspace(lo, hi, 20))
    assert tr.violations == []
    with pytest.raises(PreconditionError):
        chi_trace(identity_plan, centre, None, 0, 0, [0.2, 0.1])


# --------------------------------------------------------------- profiles


def test_identity_roundness(identity_plan, centre):
    prof = roundness_profile(identity_plan, centre)
    assert prof.verdict == ROUND
    for s, _ in prof.slopes:
        assert s == pytest.approx(0.5, abs=0.07)
    assert prof.eccentricities[prof.trusted].max() <= 1.2


def test_trusted_window_is_ordered(identity_plan, centre):
    lo, hi = trusted_window(identity_plan, centre)
    assert 0 < lo < hi
    u = potential_eval(identity_plan, identity_plan.diagram.vertex_arrays()[0])[0]
    assert hi == pytest.approx(0.1 * (u.max() - u.min()))


def test_identity_proxy_is_a_disk(identity_plan, centre):
    h = 0.02
    p = v_section_proxy(identity_plan, centre, h)
    disk = regular_polygon(256, math.sqrt(2 * h), centre.p0)
    assert hausdorff_distance(p, disk) <= 3 / math.sqrt(len(identity_plan.cloud))


def test_linear_map_proxy_swaps_axes(linear_plan):
    bp = base_point(linear_plan, [0.0, 0.0])
    h = 0.03
    s, _ = section(linear_plan, bp, h)
    lo, hi = s.bbox()
    ext_u = hi - lo
    p = v_section_proxy(linear_plan, bp, h)
    lo, hi = p.bbox()
    ext_v = hi - lo
    # u-section is long in x2 (A = diag(2, 1/2)); its gradient image is long in x1
    assert ext_u[1] > 1.5 * ext_u[0]
    assert ext_v[0] > 1.5 * ext_v[1]
    major, minor, count = proxy_profile(linear_plan, bp, [h])
    assert count[0] > 10 and major[0] > minor[0]


# ------------------------------------------------------------ blow-ups


def test_blowups_agree_across_scales(identity_plan):
    a = blowup_rescale(identity_plan, [0.0, 0.0], 0.05)
    b = blowup_rescale(identity_plan, [0.0, 0.0], 0.05 / 4)
    z = np.random.default_rng(0).uniform(-0.7, 0.7, (500, 2))
    z = z[(z**2).sum(1) < 0.49]
    assert np.abs(a(z) - b(z)).max() <= 0.15
    assert homogeneity_defect(a, 2.0) <= 0.05


# ------------------------------------------------------------ obliqueness


def test_obliqueness():
    sq = rectangle((0, 0), (1, 1))
    assert obliqueness_check(sq, [0, 0], sq, [0, 0]) == pytest.approx(1.0)
    rot = rectangle((-1, 0), (0, 1))
    assert obliqueness_check(sq, [0, 0], rot, [0, 0]) == pytest.approx(0.0, abs=1e-15)
    obtuse_src = sector_polygon(-math.pi / 3, math.pi / 3, 1.0, 8)
    obtuse_tgt = sector_polygon(-math.pi / 4, math.pi / 4, 1.0, 8)
    assert obliqueness_check(obtuse_src, [0, 0], obtuse_tgt, [0, 0]) > 0


# ------------------------------------------------------------------- fits


def test_exponent_fit():
    x = np.geomspace(1e-3, 1e-1, 12)
    s, hw = exponent_fit(x, x**0.5)
    assert s == pytest.approx(0.5, abs=1e-12)
    assert hw < 1e-10
    noise = 1 + 0.01 * np.random.default_rng(4).standard_normal(len(x))
    s, _ = exponent_fit(x, x**0.6 * noise)
    assert abs(s - 0.6) <= 0.02
    with pytest.raises(FitDomainError):
        exponent_fit([0.1], [0.3])
    with pytest.raises(FitDomainError):
        exponent_fit(x, -x)
