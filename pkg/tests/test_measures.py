import math

import numpy as np
import pytest
from scipy.integrate import quad

from kinform import convexfn as cf
from kinform.measures import (MeasureQuery, RouteMismatch, SteinerSampler, check_routes,
                              intrinsic_volume, ma0_integral, ma_closed_form, ma_j_integral,
                              ma_smooth, ma_support_mass, ma_transform, phi_integral_smooth,
                              phi_region_oracle, phi_weighted_oracle, radial_ma_marginal)
from kinform.numerics import WeightedIntegral, kappa
from kinform.transforms import R_power, tent

QUAD = cf.Quadratic((0.0, 0.0), 0.5)


@pytest.mark.parametrize("j, expected", [(1, 2 * math.pi / 3), (2, math.pi / 3)])
def test_phi_smooth_quadratic(j, expected):
    res = phi_integral_smooth(MeasureQuery(QUAD, j, tent(1.0)))
    assert res.value == pytest.approx(expected, abs=1e-4)


@pytest.mark.parametrize("f", [QUAD, cf.QuarticNorm((0.0, 0.0))], ids=["quadratic", "quartic"])
def test_phi_smooth_radial_vector_vanishes(f):
    res = phi_integral_smooth(MeasureQuery(f, 1, tent(1.0), "vector"))
    assert np.all(np.abs(res.value) < 1e-8)


def test_ma_smooth_quadratic():
    res = ma_j_integral(MeasureQuery(QUAD, 1, tent(1.0)))
    assert res.value == pytest.approx(math.pi / 2, abs=1e-3)


def test_phi_oracle_cone():
    res = phi_weighted_oracle(MeasureQuery(cf.Cone(1.0), 1, tent(1.5)))
    assert res.value == pytest.approx(1.25 * math.pi, rel=0.02)
    assert res.samples > 0


def test_phi_oracle_cone_vector_vanishes():
    res = phi_weighted_oracle(MeasureQuery(cf.Cone(1.0), 1, tent(1.5), "vector"))
    assert np.linalg.norm(res.value) < 1e-3 + 5 * res.error_estimate


def test_phi_oracle_cell_mode():
    res = phi_weighted_oracle(MeasureQuery(cf.Cone(1.0), 1, tent(1.5)), cells=True)
    assert res.value == pytest.approx(1.25 * math.pi, rel=0.02)


@pytest.mark.parametrize("f, j, weight", [
    (cf.QuarticNorm((0.5, 0.0)), 1, "vector"),
    (cf.Quadratic((0.3, -0.2), 0.5), 2, "scalar"),
])
def test_oracle_matches_smooth_quadrature(f, j, weight):
    q = MeasureQuery(f, j, tent(1.0), weight)
    a = phi_weighted_oracle(q, SteinerSampler(points=2**13, seed=1))
    b = phi_integral_smooth(q)
    assert np.linalg.norm(np.atleast_1d(a.value - b.value)) <= 0.02 * np.linalg.norm(b.value)


def test_region_oracle_dimension_reduction():
    # a ridge g(x_1) on a rectangle: Phi_1 of the box is (total slope change) x (height)
    r = cf.Ridge((0.0, 0.5), (1.0, 2.0), -0.5)
    res = phi_region_oracle(r, 1, ("box", (-0.5, -1.0), (1.0, 1.0)), SteinerSampler(seed=2))
    assert res.value == pytest.approx(3.0 * 2.0, rel=0.02)


def test_region_oracle_ball_quadratic():
    res = phi_region_oracle(QUAD, 2, ("ball", 1.0), SteinerSampler(seed=3))
    assert res.value == pytest.approx(math.pi, rel=0.02)


@pytest.mark.parametrize("alpha", [tent(1.5), tent(0.8)])
def test_cone_closed_form(alpha):
    res = ma_closed_form(MeasureQuery(cf.Cone(1.0), 1, alpha))
    assert res.value == pytest.approx(math.pi * float(alpha(np.array(1.0))), abs=1e-10)
    tr = ma_transform(MeasureQuery(cf.Cone(1.0), 1, alpha))
    assert tr.value == pytest.approx(res.value, rel=0.02, abs=1e-3)


@pytest.mark.parametrize("s", [0.5, 1.0])
def test_halfcone_vector_closed_form(s):
    alpha = tent(2.0)
    q = MeasureQuery(cf.HalfCone(s), 1, alpha, "vector")
    res = ma_closed_form(q)
    expected = s**2 * float(R_power(alpha, -1)(np.array(s)))
    assert np.allclose(res.value, [0.0, expected], atol=1e-12)
    tr = ma_transform(q)
    assert np.linalg.norm(tr.value - res.value) <= 0.02 * expected + 3 * tr.error_estimate


def test_ma0_integral():
    assert ma0_integral(tent(1.0)).value == pytest.approx(math.pi)
    assert ma0_integral(tent(1.0), n=3).value == pytest.approx(kappa(3))
    assert np.all(ma0_integral(tent(1.0), "vector").value == 0)
    assert ma0_integral(tent(1.0), region=((2.0, 0.0), 1.0)).value == 0.0


@pytest.mark.parametrize("K, n, j, expected", [
    (("ball", 1.0), 2, 1, math.pi),
    (("ball", 1.0), 2, 0, math.pi),
    (("ball", 1.0), 3, 0, 4 * math.pi / 3),
    (("segment", 2.0), 2, 1, 2.0),
])
def test_ma_support_mass(K, n, j, expected):
    assert ma_support_mass(K, n, j) == pytest.approx(expected)


def test_ellipse_half_perimeter():
    M = ((1.0, 0.0), (0.0, 4.0))
    perim = quad(lambda t: math.hypot(math.sin(t), 2 * math.cos(t)), 0, 2 * math.pi)[0]
    assert intrinsic_volume(("ellipse", M), 2, 1) == pytest.approx(perim / 2, rel=1e-10)
    assert intrinsic_volume(("ellipse", M), 2, 2) == pytest.approx(2 * math.pi)


def test_radial_marginal_of_cone():
    atoms, dens = radial_ma_marginal(cf.Cone(1.0), 1)
    assert atoms == [(1.0, pytest.approx(math.pi))]
    assert np.all(dens(np.array([0.5, 1.5])) == 0)


@pytest.mark.parametrize("mu", [0.5, 2.0])
@pytest.mark.parametrize("j", [1, 2])
def test_homogeneity(mu, j):
    f = cf.QuarticNorm((0.5, 0.0))
    for fn in (phi_integral_smooth, ma_smooth):
        base = fn(MeasureQuery(f, j, tent(1.0), "vector")).value
        scaled = fn(MeasureQuery(mu * f, j, tent(1.0), "vector")).value
        assert np.allclose(scaled, mu**j * base, rtol=1e-10, atol=1e-14)


def test_quadratic_centre_does_not_matter():
    a = ma_smooth(MeasureQuery(cf.Quadratic((0.3, -0.7), 0.5), 1, tent(1.0))).value
    assert a == pytest.approx(ma_smooth(MeasureQuery(QUAD, 1, tent(1.0))).value, rel=1e-12)


@pytest.mark.parametrize("f", [QUAD, cf.QuarticNorm((0.5, 0.0))], ids=["quadratic", "quartic"])
@pytest.mark.parametrize("weight", ["scalar", "vector"])
def test_routes_agree(f, weight):
    q = MeasureQuery(f, 1, tent(1.0), weight)
    a, b = ma_smooth(q), ma_transform(q)
    check_routes(a, b, 0.01)


def test_route_mismatch_raised():
    a = WeightedIntegral(1.0, "smooth_quadrature", 0.0)
    b = WeightedIntegral(1.1, "oracle", 0.0)
    with pytest.raises(RouteMismatch):
        check_routes(a, b, 0.01)
    assert check_routes(a, b, 0.2) == pytest.approx(0.1 / 1.1)


def test_unknown_route():
    with pytest.raises(ValueError):
        ma_j_integral(MeasureQuery(QUAD, 1, tent(1.0)), route="magic")


def test_query_validation():
    with pytest.raises(ValueError):
        MeasureQuery(QUAD, 3, tent(1.0))
    with pytest.raises(ValueError):
        MeasureQuery(QUAD, 1, tent(1.0), "matrix")
