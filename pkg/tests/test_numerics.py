import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kinform.numerics import (QuadratureError, WeightedIntegral, elem_sym, haar_rotation,
                              haar_rotations, is_rotation, kappa, make_grid, mixed_det_two,
                              mixed_dets, omega, panel_rule, product_quadrature, radial_rule,
                              rng_stream, sphere_rule, steiner_fit, tail_integral)


def sym(rng, n):
    a = rng.standard_normal((n, n))
    return (a + a.T) / 2


def test_kappa_values():
    assert kappa(0) == 1.0
    assert kappa(1) == pytest.approx(2.0)
    assert kappa(2) == pytest.approx(math.pi)
    assert kappa(3) == pytest.approx(4 * math.pi / 3)
    assert omega(2) == pytest.approx(2 * math.pi)


@pytest.mark.parametrize("eig, j, expected", [
    ([2, 3], 1, 5),
    ([1, 1, 1], 2, 3),
    ([1, 2, 3], 3, 6),
    ([1, 2, 3], 0, 1),
])
def test_elem_sym_examples(eig, j, expected):
    assert elem_sym(eig, j) == pytest.approx(expected)


def test_elem_sym_out_of_range():
    with pytest.raises(ValueError):
        elem_sym([1, 2], 3)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_elem_sym_identity_is_binomial(n):
    for j in range(n + 1):
        assert elem_sym(np.ones(n), j) == pytest.approx(math.comb(n, j))


def test_elem_sym_batched():
    vals = np.array([[1.0, 2.0, 3.0], [0.5, -1.0, 2.0]])
    assert np.allclose(elem_sym(vals, 2), [11.0, -0.5 - 2.0 + 1.0])


@pytest.mark.parametrize("A, B, j, expected", [
    (np.eye(2), np.eye(2), 1, 1.0),
    (np.diag([1.0, 2.0]), np.diag([3.0, 4.0]), 1, 5.0),
    (np.diag([2.0, 3.0]), np.array([[7.0, 1.0], [1.0, -2.0]]), 2, 6.0),
])
def test_mixed_det_examples(A, B, j, expected):
    assert mixed_det_two(A, B, j) == pytest.approx(expected, abs=1e-12)


def test_mixed_det_dimension_mismatch():
    with pytest.raises(ValueError):
        mixed_det_two(np.eye(2), np.eye(3), 1)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 4), st.integers(0, 2**31 - 1))
def test_mixed_det_polarization(n, seed):
    rng = np.random.default_rng(seed)
    A, B = sym(rng, n), sym(rng, n)
    D = mixed_dets(A, B)
    for s, t in [(0.3, 1.7), (-1.2, 0.4)]:
        poly = sum(math.comb(n, j) * D[j] * s**j * t ** (n - j) for j in range(n + 1))
        assert poly == pytest.approx(np.linalg.det(s * A + t * B), rel=1e-9, abs=1e-9)
    # D(A, A) = det A for every j, and symmetry under swapping the roles
    assert np.allclose(mixed_dets(A, A), np.linalg.det(A), atol=1e-10)
    assert np.allclose(mixed_dets(B, A)[::-1], D, atol=1e-10)


def test_haar_group_membership():
    Rs = haar_rotations(rng_stream(1, 0), 3, 200)
    assert all(is_rotation(R) for R in Rs)
    assert is_rotation(haar_rotation(rng_stream(1, 1), 2))


@pytest.mark.parametrize("n", [2, 3])
def test_haar_mean_vanishes(n):
    Rs = haar_rotations(rng_stream(7, 0), n, 10_000)
    mean = Rs.mean(axis=0)
    # each entry has variance 1/n under Haar measure
    se = math.sqrt(1.0 / n) / 100
    assert np.all(np.abs(mean) < 4 * se)
    assert np.all(np.abs(Rs[:, :, 0].mean(axis=0)) < 3 * 10_000 ** -0.5)


def test_rng_streams_are_reproducible_and_distinct():
    a = rng_stream(5, 3).random(4)
    assert np.array_equal(a, rng_stream(5, 3).random(4))
    assert not np.array_equal(a, rng_stream(5, 4).random(4))


@pytest.mark.parametrize("values, coef", [
    (lambda s: 1 + 2 * s + s**2, [1, 2, 1]),
    (lambda s: math.pi * (1 + s) ** 2, [math.pi, 2 * math.pi, math.pi]),
    (lambda s: math.pi * (2 + s) ** 2, [4 * math.pi, 4 * math.pi, math.pi]),
])
def test_steiner_fit_examples(values, coef):
    s = np.arange(1, 11) * 0.1
    assert np.allclose(steiner_fit(s, [values(x) for x in s], 2), coef, atol=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=5))
def test_steiner_fit_recovers_polynomials(coef):
    deg = len(coef) - 1
    s = np.arange(1, 11) * 0.1
    y = np.polynomial.polynomial.polyval(s, coef)
    assert np.allclose(steiner_fit(s, y, deg), coef, atol=1e-8)


def test_steiner_fit_needs_enough_nodes():
    with pytest.raises(ValueError):
        steiner_fit([0.1, 0.1, 0.2], [1, 1, 2], 2)


def test_panel_rule_integrates_log_singularity():
    r, w = panel_rule(1e-12, 1.0, 24)
    assert np.sum(w * -np.log(r)) == pytest.approx(1.0, rel=1e-9)


def test_radial_rule_splits_at_breaks():
    r, w = radial_rule(0.0 + 1e-9, 2.0, breaks=(0.5, 1.5), order=16)
    f = np.abs(r - 0.5) + np.maximum(0, r - 1.5)
    exact = (0.5**2 / 2 + 1.5**2 / 2) + 0.5**2 / 2
    assert np.sum(w * f) == pytest.approx(exact, rel=1e-8)
    assert not np.any(np.isin(r, [0.5, 1.5]))


def test_tail_integral_rowwise():
    s = np.array([0.1, 0.5, 0.9])
    got = tail_integral(lambda r: 1 - r, s, 1.0, breaks=(1.0,))
    assert np.allclose(got, (1 - s) ** 2 / 2, atol=1e-12)


@pytest.mark.parametrize("n, count", [(2, 512), (3, 48 * 96), (4, 4000)])
def test_sphere_rule_mass(n, count):
    u, w = sphere_rule(n, count)
    assert np.all(w > 0)
    assert w.sum() == pytest.approx(omega(n), abs=1e-8)
    assert np.allclose(np.linalg.norm(u, axis=1), 1.0)
    # second moments of the sphere: int u_i u_k = delta_ik omega_n / n
    M = (u * w[:, None]).T @ u
    assert np.allclose(M, np.eye(n) * omega(n) / n, atol=1e-8)


def test_product_quadrature_annulus_area():
    grid = make_grid(2, 1.0, eps=0.01)
    res = product_quadrature(lambda x: np.ones(x.shape[:-1]), grid)
    assert res.value == pytest.approx(math.pi * (1 - 1e-4), abs=1e-6)
    assert res.method == "smooth_quadrature"


def test_product_quadrature_odd_vector_vanishes():
    grid = make_grid(2, 1.0)
    res = product_quadrature(lambda x: 1 / np.linalg.norm(x, axis=-1), grid, "vector")
    assert np.all(np.abs(res.value) < 1e-8)


def test_product_quadrature_tent_over_radius():
    grid = make_grid(2, 1.0, breaks=(1.0,))
    res = product_quadrature(lambda x: np.maximum(0, 1 - np.linalg.norm(x, axis=-1))
                             / np.linalg.norm(x, axis=-1), grid, estimate_error=True)
    assert res.value == pytest.approx(math.pi, abs=1e-4)
    assert res.error_estimate >= 0


def test_product_quadrature_rejects_nonfinite():
    grid = make_grid(2, 1.0)
    with pytest.raises(QuadratureError):
        product_quadrature(lambda x: np.full(x.shape[:-1], np.nan), grid)


def test_grid_weights_validated():
    grid = make_grid(2, 1.0)
    assert grid.angular_weights.sum() == pytest.approx(2 * math.pi)
    assert grid.points().shape[-1] == 2


def test_weighted_integral_error_nonnegative():
    with pytest.raises(ValueError):
        WeightedIntegral(1.0, "closed_form", -1.0)
    assert WeightedIntegral(np.zeros(2), "closed_form").is_vector
