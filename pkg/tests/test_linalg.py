import numpy as np
import pytest
from hypothesis import given, strategies as st

from skit.errors import ValidationError
from skit.linalg import (
    as_matrix,
    gaussian_matrix,
    make_rng,
    orthonormalize,
    power_iteration_norm,
    schatten_norm,
    singular_values,
    spectral_norm_upper_bound,
    svd,
)


def check_svd(m, res):
    k = min(m.shape)
    assert res.u.shape == (m.shape[0], k) and res.vt.shape == (k, m.shape[1])
    assert np.linalg.norm(res.u.T @ res.u - np.eye(k)) <= 1e-10 * k
    assert np.linalg.norm(res.vt @ res.vt.T - np.eye(k)) <= 1e-10 * k
    assert np.linalg.norm(res.reconstruct() - m) <= 1e-9 * max(np.linalg.norm(m), 1e-300)
    assert np.all(np.diff(res.sigma) <= 0) and np.all(res.sigma >= 0)


def test_as_matrix_rejects_bad_input():
    with pytest.raises(ValidationError):
        as_matrix([1.0, 2.0])
    with pytest.raises(ValidationError):
        as_matrix([[np.nan]])
    with pytest.raises(ValidationError):
        as_matrix(np.zeros((0, 3)))


def test_svd_diagonal(backend):
    res = svd(np.diag([3.0, 2.0, 1.0]), backend=backend)
    np.testing.assert_allclose(res.sigma, [3, 2, 1], atol=1e-14)
    np.testing.assert_allclose(res.u, np.eye(3), atol=1e-14)
    np.testing.assert_allclose(res.vt, np.eye(3), atol=1e-14)


def test_svd_rank_one(backend, rng):
    u = rng.standard_normal(6)
    v = rng.standard_normal(4)
    u *= 2 / np.linalg.norm(u)
    v *= 3 / np.linalg.norm(v)
    res = svd(np.outer(u, v), backend=backend)
    assert res.sigma[0] == pytest.approx(6.0, rel=1e-13)
    assert np.all(res.sigma[1:] == 0.0)
    assert res.rank == 1
    check_svd(np.outer(u, v), res)


def test_svd_random_reconstruction(backend):
    m = make_rng(8).standard_normal((8, 5))
    res = svd(m, backend=backend)
    assert np.linalg.norm(res.reconstruct() - m) / np.linalg.norm(m) <= 1e-10
    np.testing.assert_allclose(res.sigma, np.linalg.svd(m, compute_uv=False), rtol=1e-12)


@pytest.mark.parametrize("shape", [(1, 1), (1, 7), (7, 1), (40, 40), (64, 17), (17, 64), (256, 256)])
def test_svd_shapes(shape, backend):
    m = make_rng(sum(shape)).standard_normal(shape)
    check_svd(m, svd(m, backend=backend))


def test_svd_seeded_sweep():
    # 200 matrices across shapes and spectra
    rng = make_rng(200)
    for i in range(200):
        r, c = rng.integers(1, 33, size=2)
        m = rng.standard_normal((r, c)) * rng.uniform(1e-3, 1e3)
        if i % 5 == 0:
            m[:, : c // 2] = 0.0  # rank deficient
        check_svd(m, svd(m))


def test_svd_backends_agree(rng):
    m = rng.standard_normal((30, 12))
    a, b = svd(m, backend="numpy"), svd(m, backend="numba")
    np.testing.assert_allclose(a.sigma, b.sigma, rtol=1e-12)
    np.testing.assert_allclose(a.reconstruct(), b.reconstruct(), atol=1e-12)


def test_svd_zero_matrix(backend):
    res = svd(np.zeros((4, 3)), backend=backend)
    assert res.rank == 0 and np.all(res.sigma == 0)
    assert np.allclose(res.u.T @ res.u, np.eye(3))


def test_svd_is_pure(rng):
    m = rng.standard_normal((9, 6))
    a, b = svd(m), svd(m)
    assert np.array_equal(a.u, b.u) and np.array_equal(a.sigma, b.sigma) and np.array_equal(a.vt, b.vt)


@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_svd_property(rows, cols, seed):
    m = make_rng(seed).standard_normal((rows, cols))
    check_svd(m, svd(m))
    assert spectral_norm_upper_bound(m, "schatten-4") >= singular_values(m)[0] - 1e-9
    assert spectral_norm_upper_bound(m, "schatten-2") >= spectral_norm_upper_bound(m, "schatten-4") - 1e-9


def test_orthonormalize_identity():
    res = orthonormalize(np.eye(4))
    np.testing.assert_allclose(res.q, np.eye(4), atol=1e-15)
    assert res.rank == 4 and not res.deficient


def test_orthonormalize_parallel_columns():
    e1 = np.array([1.0, 0.0, 0.0])
    res = orthonormalize(np.stack([e1, 2 * e1], axis=1))
    np.testing.assert_allclose(res.q[:, 0], e1, atol=1e-15)
    assert abs(res.q[:, 1] @ e1) <= 1e-12
    assert res.rank == 1 and res.deficient


def test_orthonormalize_random(rng):
    q = orthonormalize(rng.standard_normal((16, 4))).q
    assert np.linalg.norm(q.T @ q - np.eye(4)) <= 1e-10


def test_orthonormalize_wide_rejected():
    with pytest.raises(ValidationError):
        orthonormalize(np.ones((2, 3)))


def test_norm_bounds_diagonal():
    d = np.diag([3.0, 2.0])
    assert spectral_norm_upper_bound(d, "schatten-2") == pytest.approx(np.sqrt(13.0), rel=1e-15)
    assert spectral_norm_upper_bound(d, "schatten-4") == pytest.approx(97.0**0.25, rel=1e-15)
    with pytest.raises(ValidationError):
        spectral_norm_upper_bound(d, "schatten-3")


def test_norm_bounds_random(rng):
    m = rng.standard_normal((64, 64))
    top = np.linalg.svd(m, compute_uv=False)[0]
    for v in ("schatten-2", "schatten-4"):
        assert spectral_norm_upper_bound(m, v) >= top


def test_power_iteration():
    rng = make_rng(1)
    assert power_iteration_norm(np.diag([5.0, 1.0]), 100, rng) == pytest.approx(5.0, abs=1e-6)
    assert power_iteration_norm(np.zeros((3, 3)), 10, rng) == 0.0
    m = make_rng(2).standard_normal((32, 32))
    est = power_iteration_norm(m, 50, make_rng(3))
    top = np.linalg.svd(m, compute_uv=False)[0]
    assert abs(est - top) <= 0.05 * top and est <= top * (1 + 1e-12)


def test_gaussian_matrix():
    a = gaussian_matrix(2, 2, make_rng(5))
    b = gaussian_matrix(2, 2, make_rng(5))
    assert np.array_equal(a, b)
    big = gaussian_matrix(100, 100, make_rng(6))
    assert abs(big.mean()) <= 0.05 and abs(big.var() - 1) <= 0.05
    one = gaussian_matrix(1, 1, make_rng(7))
    assert one.shape == (1, 1) and np.isfinite(one[0, 0])
    with pytest.raises(ValidationError):
        gaussian_matrix(0, 1, make_rng(0))


def test_schatten_norm():
    s = np.array([3.0, 4.0])
    assert schatten_norm(s, 2) == pytest.approx(5.0)
    assert schatten_norm(s, np.inf) == 4.0
    assert schatten_norm(np.array([1e200, 1e200]), 400) == pytest.approx(1e200 * 2 ** (1 / 400))
    assert schatten_norm(np.zeros(3), 3) == 0.0
