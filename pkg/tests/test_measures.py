import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdotlab.convex2d import Polygon, rectangle, regular_polygon, sector_polygon
from sdotlab.errors import PreconditionError
from sdotlab.measures import (
    HolderPerturbed,
    MonomialYn,
    Quadrature,
    RadialHomog,
    Uniform,
    eval_density,
    first_moments,
    homogeneity_check,
    integrate,
    integrate_many,
    triangle_rule,
)

UNIT = rectangle((0, 0), (1, 1))
TRI = Polygon([[0, 0], [1, 0], [1, 1]])


def monte_carlo(d, p: Polygon, n: int = 10**7, seed: int = 0) -> tuple[float, float]:
    """Mean and standard error of ``area * d(X)`` with ``X`` uniform in ``p``."""
    rng = np.random.default_rng(seed)
    lo, hi = p.bbox()
    box = float(np.prod(hi - lo))
    x = lo + (hi - lo) * rng.random((n, 2))
    vals = np.where(p.contains(x), d(x), 0.0) * box
    return float(vals.mean()), float(vals.std() / math.sqrt(n))


def test_eval_examples():
    assert eval_density(Uniform(1.0), [3.0, -2.0]) == 1.0
    assert eval_density(MonomialYn(1), [0.3, 0.5]) == 0.5
    assert eval_density(HolderPerturbed(Uniform(1.0), 0.2, 0.5), [1.0, 0.0]) == pytest.approx(1.2)
    assert eval_density(MonomialYn(2), [0.3, -0.5]) == 0.0


def test_integrate_examples():
    assert integrate(Uniform(1.0), UNIT) == pytest.approx(1.0, abs=1e-14)
    assert integrate(MonomialYn(1), UNIT) == pytest.approx(0.5, abs=1e-14)


def test_monomial_fractional_power_on_triangle():
    exact = 1 / 2.5 / 3.5
    got = integrate(MonomialYn(1.5), TRI)
    assert got == pytest.approx(exact, rel=1e-9)
    mc, se = monte_carlo(MonomialYn(1.5), TRI)
    assert abs(mc - exact) < 5 * se


@pytest.mark.parametrize("degree", range(1, 13))
def test_triangle_rule_exact_for_monomials(degree):
    x, w = triangle_rule(degree)
    assert w.sum() == pytest.approx(0.5, abs=1e-15)
    for a in range(degree + 1):
        b = degree - a
        # int_T x^a y^b = a! b! / (a + b + 2)!
        exact = math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
        assert float(w @ (x[:, 0] ** a * x[:, 1] ** b)) == pytest.approx(exact, rel=1e-12, abs=1e-16)


def test_adaptive_radial_density_against_polar_formula():
    # c |x|^l over the quarter disk sector (polygonal): compare with Monte Carlo
    d = RadialHomog(0.5)
    p = sector_polygon(0.0, math.pi / 2, 1.0, 64)
    got = integrate(d, p, Quadrature(6, "adaptive"))
    mc, se = monte_carlo(d, p, 4 * 10**6)
    assert abs(got - mc) < 5 * se
    # polygon is inscribed in the disk; the disk value bounds it from above
    assert got < (math.pi / 2) / 2.5


def test_holder_against_monte_carlo():
    d = HolderPerturbed(Uniform(1.0), 0.3, 0.5)
    sq = rectangle((-1, -1), (1, 1))
    got = integrate(d, sq, Quadrature(6, "adaptive"))
    mc, se = monte_carlo(d, sq, 4 * 10**6, seed=1)
    assert abs(got - mc) < 5 * se


def test_integrate_many_matches_single():
    d = MonomialYn(2)
    polys = [UNIT, TRI, regular_polygon(6, 0.5, (0.2, 0.7))]
    many = integrate_many(d, polys)
    one = [integrate(d, p) for p in polys]
    np.testing.assert_allclose(many, one, rtol=1e-14)


def test_first_moments_triangle():
    m, c = first_moments(Uniform(2.0), [TRI])
    assert m[0] == pytest.approx(1.0)
    np.testing.assert_allclose(c[0], [2 / 3, 1 / 3], atol=1e-14)


def test_monomial_ignores_lower_half_plane():
    sq = rectangle((-1, -1), (1, 1))
    assert integrate(MonomialYn(1), sq) == pytest.approx(1.0, abs=1e-14)


def test_homogeneity_check_examples():
    assert homogeneity_check(Uniform(1.0)) == 0.0
    assert homogeneity_check(MonomialYn(2)) <= 1e-12
    assert homogeneity_check(RadialHomog(1.5, (1.0, 2.0, 0.5))) <= 1e-12
    with pytest.raises(PreconditionError):
        homogeneity_check(HolderPerturbed())


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 5), st.floats(-2, 2), st.floats(-2, 2), st.floats(0.2, 1.5))
def test_scaling_the_density_scales_the_mass(f, cx, cy, r):
    d = MonomialYn(1)
    p = regular_polygon(5, r, (cx, cy))
    assert integrate(d.scaled(f), p) == pytest.approx(f * integrate(d, p), rel=1e-12, abs=1e-15)


def test_quadrature_rejects_bad_mode():
    with pytest.raises(PreconditionError):
        Quadrature(4, "gauss")
