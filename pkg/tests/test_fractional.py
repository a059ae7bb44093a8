import numpy as np
import pytest
from hypothesis import given, strategies as st

from skit.errors import NumericError, ValidationError
from skit.fractional import (
    FractionalMapPlan,
    PolarResult,
    adaptive_order,
    binomial_coefficients,
    fractional_map,
    polar_newton_schulz,
    remez_fractional,
    svd_fractional,
    taylor_fractional,
    taylor_scalar_error,
)
from skit.linalg import make_rng
from skit.minimax import fit_remez_schedule
from skit.synth import heavy_tailed_matrix, random_orthonormal, with_spectrum

from conftest import rel


def exact_polar(g):
    u, _, vt = np.linalg.svd(g, full_matrices=False)
    return u @ vt


def test_plan_validation():
    with pytest.raises(ValidationError):
        FractionalMapPlan(method="qr")
    with pytest.raises(ValidationError):
        FractionalMapPlan(p=0.5)
    with pytest.raises(ValidationError):
        FractionalMapPlan(ns_budget=11)
    with pytest.raises(ValidationError):
        FractionalMapPlan(tol=1.5)
    assert FractionalMapPlan().with_p(3).p == 3.0


def test_polar_diagonal():
    res = polar_newton_schulz(np.diag([3.0, 2.0, 1.0]), 5)
    np.testing.assert_allclose(res.polar, np.eye(3), atol=1e-3)
    assert res.residual <= 2e-3


def test_polar_orthogonal_fixed_point():
    q = random_orthonormal(6, 6, make_rng(1))
    # the schedule's late steps are near-identity maps at 1; after the first
    # aggressive step the factor is off by O(1e-6), and it settles by step 6
    res = polar_newton_schulz(q, 6)
    assert np.linalg.norm(res.polar - q) <= 1e-9


def test_polar_zero_matrix_raises():
    with pytest.raises(NumericError):
        polar_newton_schulz(np.zeros((3, 3)))


def test_polar_custom_coeffs():
    g = np.diag([1.0, 0.5])
    res = polar_newton_schulz(g, 2, coeffs=(1.5, -0.5, 0.0))
    x = np.array([1.0, 0.5]) / res.alpha
    for _ in range(2):
        x = 1.5 * x - 0.5 * x**3
    np.testing.assert_allclose(np.diag(res.polar), x, rtol=1e-14)


def test_polar_random_cond_1e3():
    g = heavy_tailed_matrix(256, 256, 1e3, make_rng(3))
    res = polar_newton_schulz(g, 5)
    err = np.linalg.norm(res.polar - exact_polar(g)) / np.sqrt(256)
    # the tail below alpha * polar_eps is not orthogonalized at budget 5
    assert err <= 0.1


def test_polar_random_moderate_cond():
    g = heavy_tailed_matrix(256, 256, 30.0, make_rng(4))
    err = np.linalg.norm(polar_newton_schulz(g, 5).polar - exact_polar(g)) / np.sqrt(256)
    assert err <= 1e-2


def test_polar_tall_and_wide_agree():
    g = make_rng(5).standard_normal((20, 7))
    a = polar_newton_schulz(g, 5).polar
    b = polar_newton_schulz(g.T, 5).polar
    np.testing.assert_allclose(a, b.T, atol=1e-13)


def test_binomial_coefficients():
    np.testing.assert_allclose(binomial_coefficients(0.5, 3), [1, 0.5, -0.125, 0.0625])
    # exact zeros terminate the series early
    np.testing.assert_array_equal(binomial_coefficients(1.0, 5), [1, 1])
    assert binomial_coefficients(2.0, 0).tolist() == [1.0]


def test_adaptive_order_regression():
    # max_order binds at the default tolerance: flagged as truncated
    ch = adaptive_order(2.0, 0.02, 1e-3)
    assert ch.order == 64 and ch.truncated
    assert ch.error == pytest.approx(3.972985e-3, rel=1e-5)
    assert adaptive_order(2.0, 0.02, 1e-2).order == 42
    assert adaptive_order(8.0, 0.02, 1e-2).order == 61


def test_adaptive_order_edges():
    assert adaptive_order(3.0, 0.02, 1.0).order == 0
    ch = adaptive_order(1.0, 0.02, 1e-15)
    assert ch.order == 1 and not ch.truncated
    with pytest.raises(ValidationError):
        adaptive_order(2.0, 0.0, 1e-3)


@given(st.floats(1.0, 50.0), st.integers(0, 40))
def test_taylor_error_monotone_in_order(p, k):
    assert taylor_scalar_error(p, 0.02, k + 1) <= taylor_scalar_error(p, 0.02, k) + 1e-15


def test_taylor_p1_order1_exact():
    g = make_rng(6).standard_normal((5, 8))
    y = taylor_fractional(g, PolarResult(exact_polar(g), 3.0, 0.0), 1.0, 1)
    np.testing.assert_allclose(y, g, atol=1e-13)


@pytest.mark.parametrize("p", [1.0, 2.0, 7.0])
@pytest.mark.parametrize("order", [0, 1, 5])
def test_taylor_identity_fixed_point(p, order):
    eye = np.eye(4)
    y = taylor_fractional(eye, PolarResult(eye, 1.0, 0.0), p, order)
    np.testing.assert_allclose(y, eye, atol=1e-15)


def test_taylor_diagonal_closed_form():
    g = np.diag([4.0, 1.0])
    order = adaptive_order(2.0, 0.02, 1e-4, max_order=4096).order
    y = taylor_fractional(g, PolarResult(np.eye(2), 4.0, 0.0), 2.0, order)
    assert rel(y, np.diag([2.0, 1.0])) <= 1e-4


def test_taylor_shape_mismatch():
    with pytest.raises(ValidationError):
        taylor_fractional(np.eye(3), PolarResult(np.eye(2), 1.0, 0.0), 2.0, 3)


def test_taylor_tall_matches_wide():
    g = make_rng(7).standard_normal((12, 5))
    pa = polar_newton_schulz(g)
    pb = polar_newton_schulz(g.T)
    np.testing.assert_allclose(taylor_fractional(g, pa, 3.0, 20), taylor_fractional(g.T, pb, 3.0, 20).T, atol=1e-12)


def test_remez_orthogonal_fixed_point():
    q = random_orthonormal(5, 5, make_rng(8))
    y = remez_fractional(q, fit_remez_schedule(3.0, 4), "schatten-2")
    # alpha = sqrt(5) for an orthogonal matrix, so the output is q scaled by
    # alpha^(1/p) * f(1/alpha); normalize that scalar out
    ratio = y @ q.T
    np.testing.assert_allclose(ratio, ratio[0, 0] * np.eye(5), atol=1e-12)


def test_remez_diagonal():
    y = fractional_map(np.diag([4.0, 1.0]), FractionalMapPlan(method="remez", p=2.0, ns_budget=5))
    assert rel(y, np.diag([2.0, 1.0])) <= 5e-2


def test_remez_zero_raises():
    with pytest.raises(NumericError):
        remez_fractional(np.zeros((2, 2)), fit_remez_schedule(2.0, 3))


def test_fractional_map_p1_is_identity():
    g = make_rng(9).standard_normal((6, 4))
    for method in ("svd", "taylor", "remez"):
        y = fractional_map(g, FractionalMapPlan(method=method, p=1.0))
        np.testing.assert_array_equal(y, g)


def test_svd_p50_near_polar():
    g = with_spectrum(np.geomspace(1.0, 0.02, 8), 10, 8, make_rng(10))
    y = fractional_map(g, FractionalMapPlan(method="svd", p=50.0))
    assert rel(y, exact_polar(g)) <= 0.08


def test_taylor_p4_random():
    g = heavy_tailed_matrix(256, 256, 100.0, make_rng(11))
    y = fractional_map(g, FractionalMapPlan(method="taylor", p=4.0))
    assert rel(y, svd_fractional(g, 4.0)) <= 1e-2


def test_taylor_polar_shortcut():
    g = make_rng(12).standard_normal((5, 5))
    plan = FractionalMapPlan(method="taylor", p=50.0)
    np.testing.assert_array_equal(fractional_map(g, plan), polar_newton_schulz(g, 5).polar)


def test_remez_degrades_at_large_p():
    g = heavy_tailed_matrix(128, 128, 1e3, make_rng(13))
    ref = svd_fractional(g, 12.0)
    t = rel(fractional_map(g, FractionalMapPlan(method="taylor", p=12.0)), ref)
    r = rel(fractional_map(g, FractionalMapPlan(method="remez", p=12.0)), ref)
    assert r > t


@given(st.floats(1.0, 50.0), st.floats(0.01, 100.0), st.integers(0, 10_000))
def test_svd_route_scale_equivariance(p, c, seed):
    g = make_rng(seed).standard_normal((5, 4))
    a = svd_fractional(c * g, p)
    b = c ** (1.0 / p) * svd_fractional(g, p)
    assert np.linalg.norm(a - b) <= 1e-10 * max(1.0, np.linalg.norm(b))


@given(st.floats(1.0, 50.0), st.integers(0, 10_000))
def test_svd_route_preserves_singular_vectors(p, seed):
    g = make_rng(seed).standard_normal((6, 4))
    u, s, vt = np.linalg.svd(g, full_matrices=False)
    y = svd_fractional(g, p)
    np.testing.assert_allclose(u.T @ y @ vt.T, np.diag(s ** (1.0 / p)), atol=1e-10)


def test_large_p_scalar_error_below_stock_reference():
    assert taylor_scalar_error(50.0, 0.02, adaptive_order(50.0).order) < 0.32
