import json
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from kinform import convexfn as cf
from kinform.numerics import haar_rotation, rng_stream

R30 = haar_rotation(rng_stream(3, 0), 2)

ZOO = [
    cf.Quadratic((0.2, -0.1), 0.5),
    cf.QuarticNorm((0.5, 0.0)),
    cf.Cone(1.0),
    cf.HalfCone(1.0),
    cf.Norm(2),
    cf.SupportBall(1.5, (0.3, 0.0)),
    cf.SupportEllipse(((1.0, 0.0), (0.0, 4.0))),
    cf.Affine((1.0, -2.0), 0.5),
    cf.Ridge((0.0, 0.5), (1.0, 2.0), -0.5),
    cf.Rotated(cf.HalfCone(0.7), R30),
    cf.HalfCone(0.5) + 2.0 * cf.Cone(1.0),
]

SMOOTH = [
    cf.Quadratic((0.2, -0.1), 0.5),
    cf.QuarticNorm((0.5, 0.0)),
    cf.SupportEllipse(((1.0, 0.3), (0.3, 2.0))),
    cf.Rotated(cf.QuarticNorm((0.0, 0.7)), R30),
    cf.Quadratic((0.0, 0.0), 1.0) + cf.QuarticNorm((0.3, 0.3)),
]

points = st.tuples(st.floats(-3, 3), st.floats(-3, 3)).map(np.array)


@pytest.mark.parametrize("f, x, expected", [
    (cf.Cone(1.0), (2.0, 0.0), 1.0),
    (cf.HalfCone(1.0), (3.0, -4.0), 2.0),
    (cf.HalfCone(1.0), (0.0, -5.0), 0.0),
    (cf.HalfCone(1.0), (0.0, 3.0), 2.0),
    (cf.SupportBall(2.0, (1.0, 0.0)), (3.0, 4.0), 13.0),
    (cf.SupportEllipse(((1.0, 0.0), (0.0, 4.0))), (0.0, 1.0), 2.0),
])
def test_evaluate_examples(f, x, expected):
    assert cf.evaluate(f, np.array(x)) == pytest.approx(expected)


@pytest.mark.parametrize("mu, s, lam, t, x, expected", [
    (1, 1, 1, 2, (0, 1.5), 0.5),
    (1, 2, 1, 1, (0, 1.5), 0.5),
])
def test_eval_sum_cases_examples(mu, s, lam, t, x, expected):
    assert cf.eval_sum_cases(mu, s, lam, t, np.array(x, float)) == pytest.approx(expected)


@settings(max_examples=2000, deadline=None)
@given(st.floats(0, 3), st.floats(0.1, 3), st.floats(0, 3), st.floats(0.1, 3),
       st.tuples(st.floats(-4, 4), st.floats(-4, 4)))
def test_eval_sum_cases_match_sum(mu, s, lam, t, x):
    x = np.array(x)
    direct = mu * cf.HalfCone(s).value(x) + lam * cf.Cone(t).value(x)
    assert cf.eval_sum_cases(mu, s, lam, t, x) == pytest.approx(direct, abs=1e-12)


def test_eval_sum_cases_random_batch():
    rng = np.random.default_rng(0)
    for _ in range(10_000):
        mu, lam = rng.uniform(0, 3, 2)
        s, t = rng.uniform(0.1, 3, 2)
        x = rng.uniform(-4, 4, 2)
        direct = mu * cf.HalfCone(s).value(x) + lam * cf.Cone(t).value(x)
        assert abs(cf.eval_sum_cases(mu, s, lam, t, x) - direct) <= 1e-12


@pytest.mark.parametrize("f", ZOO, ids=lambda f: type(f).__name__)
@settings(max_examples=60, deadline=None)
@given(x=points, y=points)
def test_midpoint_convexity(f, x, y):
    mid = f.value((x + y) / 2)
    assert mid <= (f.value(x) + f.value(y)) / 2 + 1e-9


def test_gradient_examples():
    assert np.allclose(cf.gradient(cf.Quadratic((0, 0), 0.5), np.array([1.0, 2.0])), [1, 2])
    assert np.allclose(cf.gradient(cf.Norm(2), np.array([3.0, 4.0])), [0.6, 0.8])
    with pytest.raises(cf.NotDifferentiable):
        cf.gradient(cf.Norm(2), np.zeros(2))
    with pytest.raises(cf.NotDifferentiable):
        cf.gradient(cf.Cone(1.0), np.array([1.0, 0.0]))


def test_hessian_examples():
    assert np.allclose(cf.hessian(cf.Quadratic((0, 0), 0.5), np.array([0.3, 0.1])), np.eye(2))
    assert np.allclose(cf.hessian(cf.Norm(2), np.array([1.0, 0.0])), [[0, 0], [0, 1]])
    assert np.allclose(cf.hessian(cf.Cone(1.0), np.array([0.5, 0.0])), 0)
    with pytest.raises(cf.NotTwiceDifferentiable):
        cf.hessian(cf.Norm(2), np.zeros(2))
    with pytest.raises(cf.NotTwiceDifferentiable):
        cf.hessian(cf.HalfCone(1.0), np.array([0.6, 0.8]))


@pytest.mark.parametrize("f", SMOOTH + [cf.Cone(1.0), cf.HalfCone(1.0), cf.Norm(2)],
                         ids=lambda f: type(f).__name__)
@settings(max_examples=40, deadline=None)
@given(x=points)
def test_derivatives_match_finite_differences(f, x):
    assume(np.linalg.norm(x) > 0.2)
    # stay away from the singular sets of the nonsmooth variants
    r = np.linalg.norm(x)
    assume(abs(r - 1.0) > 0.05 and abs(abs(x[0]) - 1.0) > 0.05 and abs(x[1]) > 0.05)
    h = 1e-6
    e = np.eye(2)
    g = f.gradient(x)
    fd = np.array([(f.value(x + h * e[i]) - f.value(x - h * e[i])) / (2 * h) for i in range(2)])
    scale = max(1.0, float(np.max(np.abs(g))))
    assert np.allclose(g, fd, atol=1e-6 * scale * 10)
    H = f.hessian(x)
    fdH = np.array([(f.gradient(x + h * e[i]) - f.gradient(x - h * e[i])) / (2 * h) for i in range(2)])
    scaleH = max(1.0, float(np.max(np.abs(H))))
    assert np.allclose(H, fdH, atol=1e-5 * scaleH * 10)


def test_subdiff_examples():
    S = cf.subdiff(cf.Cone(1.0), np.array([1.0, 0.0]))
    assert isinstance(S, cf.Segment)
    assert S.contains([0.0, 0.0]) and S.contains([1.0, 0.0]) and S.contains([0.4, 0.0])
    assert not S.contains([1.1, 0.0])
    T = cf.subdiff(cf.Cone(1.0) + cf.Quadratic((0.0, 0.0), 0.5), np.array([1.0, 0.0]))
    assert T.contains([1.0, 0.0]) and T.contains([2.0, 0.0]) and not T.contains([2.1, 0.0])
    P = cf.subdiff(cf.Quadratic((0.0, 0.0), 0.5), np.array([0.3, -0.2]))
    assert isinstance(P, cf.Point) and np.allclose(P.g, [0.3, -0.2])


def test_subdiff_of_norm_at_origin_is_ball():
    S = cf.subdiff(cf.SupportBall(2.0, (1.0, 0.0)), np.zeros(2))
    assert S.contains([1.0, 2.0 - 1e-12]) and not S.contains([1.0, 2.1])


def test_subdiff_sum_rule_minkowski():
    f = cf.HalfCone(1.0) + cf.Cone(1.0)
    S = f.subdiff(np.array([1.0, 0.0]))
    # both summands contribute the segment [0, e1]
    assert S.contains([2.0, 0.0]) and S.contains([1.0, 0.0]) and not S.contains([2.2, 0.0])


@pytest.mark.parametrize("z, expected", [((2.0, 0.0), (1.5, 0.0)), ((1.2, 0.0), (1.0, 0.0)),
                                         ((0.5, 0.2), (0.5, 0.2))])
def test_prox_cone_examples(z, expected):
    assert np.allclose(cf.prox(cf.Cone(1.0), 0.5, np.array(z)), expected, atol=1e-12)


PROX_ZOO = ZOO + [cf.QuarticNorm((0.5, 0.0)) + cf.Quadratic((0.0, 0.7), 0.5),
                  cf.Cone(1.0) + cf.Quadratic((0.0, 0.0), 0.5),
                  cf.HalfCone(1.0) + cf.SupportBall(1.0, (0.0, 0.0))]


@pytest.mark.parametrize("f", PROX_ZOO, ids=lambda f: type(f).__name__)
@settings(max_examples=25, deadline=None)
@given(z=points, sigma=st.floats(0.05, 1.5))
def test_prox_optimality(f, z, sigma):
    x = cf.prox(f, sigma, z)
    try:
        res = cf.prox_residual(f, sigma, z, x)
    except cf.UnsupportedVariant:
        return
    assert res <= 1e-6


@pytest.mark.parametrize("f", PROX_ZOO, ids=lambda f: type(f).__name__)
@settings(max_examples=25, deadline=None)
@given(z1=points, z2=points, sigma=st.floats(0.05, 1.5))
def test_prox_nonexpansive(f, z1, z2, sigma):
    x1, x2 = cf.prox(f, sigma, z1), cf.prox(f, sigma, z2)
    assert np.linalg.norm(x1 - x2) <= np.linalg.norm(z1 - z2) + 1e-7


def test_prox_vectorized_matches_pointwise():
    f = cf.HalfCone(0.8) + 0.5 * cf.Cone(1.2)
    Z = np.random.default_rng(0).uniform(-3, 3, (50, 2))
    batch = cf.prox(f, 0.7, Z)
    assert np.allclose(batch, [cf.prox(f, 0.7, z) for z in Z], atol=1e-12)


def test_prox_minimizes_objective():
    from scipy.optimize import minimize

    f = cf.HalfCone(1.0) + cf.Cone(0.5)
    rng = np.random.default_rng(1)
    for _ in range(20):
        z = rng.uniform(-3, 3, 2)
        x = cf.prox(f, 0.6, z)
        obj = lambda y: 0.6 * f.value(y) + 0.5 * np.sum((y - z) ** 2)
        best = minimize(obj, z, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-12})
        assert obj(x) <= best.fun + 1e-8


def test_prox_rejects_nonpositive_step():
    with pytest.raises(ValueError):
        cf.prox(cf.Norm(2), 0.0, np.zeros(2))


def test_constructors_validate():
    with pytest.raises(ValueError):
        cf.Cone(0.0)
    with pytest.raises(ValueError):
        cf.HalfCone(-1.0)
    with pytest.raises(ValueError):
        cf.NonnegCombination(((-1.0, cf.Norm(2)),))


@pytest.mark.parametrize("f", ZOO, ids=lambda f: type(f).__name__)
def test_json_round_trip(f):
    d = cf.to_dict(f)
    g = cf.from_dict(json.loads(json.dumps(d)))
    x = np.array([[0.3, -1.2], [2.0, 0.5]])
    assert np.allclose(f.value(x), g.value(x))


def test_from_dict_errors():
    with pytest.raises(ValueError):
        cf.from_dict({"variant": "nope"})
    with pytest.raises(ValueError):
        cf.from_dict({"variant": "cone"})


def test_halfcone_zero_set_projection():
    w = cf.HalfCone(1.0)
    x = np.array([[3.0, -4.0], [0.0, 2.0], [0.2, 0.1]])
    p = w.project_zero_set(x)
    assert np.allclose(np.linalg.norm(x - p, axis=1), w.value(x))
