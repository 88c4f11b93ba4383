import math

import numpy as np
import pytest

from kinform import convexfn as cf
from kinform.kinematics import (KinematicExperiment, classical_balls, corollary_rhs,
                                lhs_vector, main_theorem_report, rhs_vector,
                                rotation_invariant, scalar_kinematic, z_closed_form)
from kinform.measures import MeasureQuery, SteinerSampler, ma_closed_form, ma_smooth
from kinform.numerics import haar_rotations, kappa, rng_stream
from kinform.transforms import GenericDensity, TransformedPL, tent
from kinform.valuations import closed_form_w_s

PHIS = haar_rotations(rng_stream(21, 0), 2, 10)
U = cf.QuarticNorm((0.5, 0.0))
QUAD = cf.Quadratic((0.0, 0.0), 0.5)


@pytest.mark.parametrize("lam, t", [(1.0, 2.0), (0.3, 0.5), (2.0, 1.0)])
def test_z_j1_example(lam, t):
    assert np.allclose(z_closed_form(2, 1, tent(2.0), 1.0, 1.0, lam, t), [0.0, 2.0], atol=1e-12)


def test_z_j2_example():
    assert np.allclose(z_closed_form(2, 2, tent(1.5), 1.0, 1.0, 1.0, 2.0), [0.0, 0.5], atol=1e-12)


@pytest.mark.parametrize("j", [1, 2])
@pytest.mark.parametrize("mu", [0.5, 2.0])
def test_z_without_v_is_w_s(j, mu):
    xi = tent(1.5)
    z = z_closed_form(2, j, xi, mu, 0.8, 0.0, 1.0)
    assert np.allclose(z, mu**j * closed_form_w_s(2, j, xi, 0.8), atol=1e-12)


@pytest.mark.parametrize("s, t", [(0.5, 1.0), (1.0, 0.5), (0.7, 0.7)])
@pytest.mark.parametrize("c", [0.5, 3.0])
def test_z_homogeneity(s, t, c):
    xi = tent(1.5)
    for j in (1, 2):
        base = z_closed_form(2, j, xi, 1.3, s, 0.6, t)
        scaled = z_closed_form(2, j, xi, c * 1.3, s, c * 0.6, t)
        assert np.allclose(scaled, c**j * base, rtol=1e-12, atol=1e-14)
    # the mu^j and mixed terms scale separately
    j2 = z_closed_form(2, 2, xi, 1.0, s, c, t) - z_closed_form(2, 2, xi, 1.0, s, 0.0, t)
    j1 = z_closed_form(2, 2, xi, 1.0, s, 1.0, t) - z_closed_form(2, 2, xi, 1.0, s, 0.0, t)
    assert np.allclose(j2, c * j1, rtol=1e-12, atol=1e-14)


def test_z_j1_matches_w_s_on_grid():
    for c in (1.0, 1.5, 2.5):
        xi = tent(c)
        for s in np.linspace(0.1, 3.0, 15):
            assert np.allclose(z_closed_form(2, 1, xi, 1.0, s, 1.0, 1.0),
                               closed_form_w_s(2, 1, xi, s), rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("n, j", [(2, 2), (3, 2), (3, 3)])
def test_z_continuous_across_branches(n, j):
    xi = tent(2.0)
    for t in (0.3, 0.8, 1.2):
        lo = z_closed_form(n, j, xi, 1.1, t * (1 - 1e-13), 0.7, t)
        hi = z_closed_form(n, j, xi, 1.1, t * (1 + 1e-13), 0.7, t)
        assert np.max(np.abs(lo - hi)) < 1e-10


def test_experiment_validation():
    with pytest.raises(ValueError):
        KinematicExperiment(2, 0, tent(1.0), U, QUAD)
    with pytest.raises(ValueError):
        KinematicExperiment(2, 1, tent(1.0), U, cf.Quadratic((0.0, 0.0, 0.0), 0.5))


def test_rotation_invariance_detection():
    assert rotation_invariant(cf.Cone(1.0))
    assert rotation_invariant(cf.SupportBall(1.0, (0.0, 0.0)))
    assert rotation_invariant(cf.Rotated(QUAD, PHIS[0]))
    assert not rotation_invariant(cf.SupportBall(1.0, (0.2, 0.0)))
    assert not rotation_invariant(U)


@pytest.mark.parametrize("j", [1, 2])
def test_zero_v(j):
    alpha = tent(1.5)
    exp = KinematicExperiment(2, j, alpha, U, cf.Affine((0.0, 0.0)))
    lhs, rhs = lhs_vector(exp), rhs_vector(exp)
    single = kappa(2) * ma_smooth(MeasureQuery(U, j, alpha, "vector")).value
    assert np.allclose(lhs.value, single, rtol=1e-10)
    assert np.allclose(rhs.value, single, rtol=1e-6)


@pytest.mark.parametrize("j", [1, 2])
def test_radial_pair_vanishes(j):
    exp = KinematicExperiment(2, j, tent(1.5), cf.QuarticNorm((0.0, 0.0)), QUAD)
    rep = main_theorem_report(exp)
    assert rep.passed
    assert max(map(abs, rep.lhs + rep.rhs)) < 1e-3


@pytest.mark.parametrize("j", [1, 2])
def test_rotation_equivariance_in_u(j):
    alpha = tent(1.5)
    base = lhs_vector(KinematicExperiment(2, j, alpha, U, QUAD)).value
    for phi in PHIS:
        got = lhs_vector(KinematicExperiment(2, j, alpha, cf.Rotated(U, phi), QUAD)).value
        assert np.allclose(got, phi @ base, rtol=1e-8, atol=1e-10)


def test_rotation_invariance_in_v():
    alpha = tent(1.5)
    v = cf.QuarticNorm((0.0, 0.7))
    runs = [lhs_vector(KinematicExperiment(2, 1, alpha, U, w, rotations=60, seed=5))
            for w in (v, cf.Rotated(v, PHIS[0]), cf.Rotated(v, PHIS[1]))]
    for other in runs[1:]:
        diff = np.linalg.norm(other.value - runs[0].value)
        assert diff <= 4 * math.hypot(other.stderr, runs[0].stderr)


def _alpha_for(xi, j):
    base = TransformedPL(xi, 2 - j) if j < 2 else xi
    c = math.comb(2, j)
    return GenericDensity(lambda r: c * base(r), base.support_upper, base.breaks)


@pytest.mark.parametrize("j", [1, 2])
@pytest.mark.parametrize("mu, s, lam, t", [(1.0, 0.5, 1.0, 1.0), (2.0, 1.0, 0.5, 0.5)])
def test_rhs_matches_closed_form(j, mu, s, lam, t):
    xi = tent(1.5)
    exp = KinematicExperiment(2, j, _alpha_for(xi, j), mu * cf.HalfCone(s), lam * cf.Cone(t))
    rhs = rhs_vector(exp).value
    z = kappa(2) * z_closed_form(2, j, xi, mu, s, lam, t)
    assert np.linalg.norm(rhs - z) <= 0.02 * np.linalg.norm(z)


def test_closed_channel_lhs():
    xi = tent(1.5)
    exp = KinematicExperiment(2, 2, _alpha_for(xi, 2), 2.0 * cf.HalfCone(1.0),
                              0.5 * cf.Cone(0.5), sampler=SteinerSampler(seed=6))
    rep = main_theorem_report(exp, 0.02)
    assert rep.passed, rep.line()


def test_corollary_point_reduction():
    alpha = tent(1.5)
    u = cf.HalfCone(1.0)
    got = corollary_rhs(2, 2, alpha, u, ("point",))
    single = ma_closed_form(MeasureQuery(u, 2, alpha, "vector")).value
    assert np.allclose(got, kappa(2) * single, rtol=1e-6, atol=1e-10)


def test_corollary_reduction_matches_rhs():
    alpha = tent(1.5)
    u = cf.HalfCone(1.0)
    exp = KinematicExperiment(2, 2, alpha, u, cf.SupportBall(1.0, (0.0, 0.0)))
    rhs = rhs_vector(exp).value
    cor = corollary_rhs(2, 2, alpha, u, ("ball", 1.0))
    assert np.linalg.norm(rhs - cor) <= 0.01 * np.linalg.norm(cor)


def test_scalar_quadratic():
    rep = scalar_kinematic(KinematicExperiment(2, 1, tent(1.0), QUAD, QUAD))
    assert rep.lhs[0] == pytest.approx(math.pi**2, rel=0.01)
    assert rep.rhs[0] == pytest.approx(math.pi**2, rel=0.01)


def test_scalar_zero_v():
    exp = KinematicExperiment(2, 1, tent(1.0), QUAD, cf.Affine((0.0, 0.0)))
    rep = scalar_kinematic(exp)
    assert rep.passed
    assert rep.lhs[0] == pytest.approx(math.pi * math.pi / 2, rel=1e-3)


def test_scalar_cones():
    exp = KinematicExperiment(2, 1, tent(2.5), cf.Cone(1.0), cf.Cone(2.0),
                              sampler=SteinerSampler(seed=7))
    assert scalar_kinematic(exp, 0.03).passed


@pytest.mark.parametrize("n", [2, 3])
def test_classical_balls(n):
    for j in range(n + 1):
        rep = classical_balls(n, j, 1.0, 1.0)
        assert rep.abs_err < 1e-12
    assert classical_balls(2, 1, 1.0, 1.0).lhs[0] == pytest.approx(2 * math.pi)
    assert classical_balls(n, n, 0.5, 1.5).lhs[0] == pytest.approx(kappa(n) * 2.0**n)


@pytest.mark.slow
def test_rotation_dependent_v_within_three_stderr():
    exp = KinematicExperiment(2, 1, tent(1.5), U, cf.QuarticNorm((0.0, 0.7)), rotations=200,
                              seed=3)
    lhs, rhs = lhs_vector(exp), rhs_vector(exp)
    assert lhs.mc_stderr > 0
    assert np.linalg.norm(lhs.value - rhs.value) <= 3 * math.hypot(lhs.stderr, rhs.stderr)
