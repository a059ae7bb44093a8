import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from skit.errors import NumericError, ValidationError
from skit.linalg import make_rng
from skit.randomized import (
    TailBound,
    exact_sketch,
    exponents,
    log_surrogate,
    log_tail_mass,
    maximize_log_space,
    norm_ratio_objective,
    randomized_pstar,
    sketch_spectrum,
    spectral_momentum_update,
    surrogate,
    tail_mass,
)
from skit.selector import PStarConfig
from skit.synth import with_spectrum


def test_tail_mass_spread_regime():
    # E / R^2 = 4 > d = 2: mass spread evenly over d values
    assert tail_mass(TailBound(4.0, 1.0, 2), 4.0) == pytest.approx(2 * 2.0**2)


def test_tail_mass_concentrated_regime():
    assert tail_mass(TailBound(2.0, 1.0, 5), 3.0) == pytest.approx(2.0)
    assert tail_mass(TailBound(2.0, 0.5, 10), 4.0) == pytest.approx(2.0 * 0.25)


def test_tail_mass_edges():
    assert tail_mass(TailBound(0.0, 0.0, 3), 2.0) == 0.0
    assert log_tail_mass(TailBound(0.0, 1.0, 3), 2.0) == -math.inf
    with pytest.raises(NumericError):
        tail_mass(TailBound(1.0, 0.0, 3), 2.0)
    with pytest.raises(ValidationError):
        tail_mass(TailBound(1.0, 1.0, 3), 0.0)


@given(st.floats(1e-3, 1e3), st.floats(1e-3, 10), st.integers(1, 50), st.floats(0.5, 12))
def test_log_tail_mass_consistent(e, r, d, q):
    assert log_tail_mass(TailBound(e, r, d), q) == pytest.approx(math.log(tail_mass(TailBound(e, r, d), q)), rel=1e-9, abs=1e-9)


@given(st.integers(1, 40), st.floats(0.1, 10.0), st.floats(2.0, 12.0))
def test_tail_mass_is_lower_bound_for_equal_spread(d, s, q):
    # d equal values s: E = d s^2, R = s; the bound is attained
    sig = np.full(d, s)
    true = float(np.sum(sig**q))
    assert tail_mass(TailBound(d * s * s, s, d), q) == pytest.approx(true, rel=1e-9)


def test_exponents():
    assert exponents(3.0) == (4.0 / 3.0, 4.0)


def test_sketch_full_rank_is_exact(rng):
    m = rng.standard_normal((10, 6))
    sk = sketch_spectrum(m, 8, 2, rng)
    assert sk.exact and sk.tail.energy == 0.0
    np.testing.assert_allclose(sk.sigma, np.linalg.svd(m, compute_uv=False), rtol=1e-12)


def test_sketch_low_rank_has_empty_tail(rng):
    m = with_spectrum(np.array([5.0, 3.0, 1.0]), 60, 40, rng)
    sk = sketch_spectrum(m, 8, 2, rng)
    assert not sk.exact and sk.tail.energy == 0.0
    np.testing.assert_allclose(sk.sigma[:3], [5, 3, 1], rtol=1e-10)


def test_sketch_radius_bounds_tail(rng):
    sigma = np.geomspace(10, 0.01, 40)
    m = with_spectrum(sigma, 60, 40, rng)
    sk = sketch_spectrum(m, 8, 4, rng)
    k = sk.sigma.size
    assert sk.tail.radius >= sigma[k] * (1 - 1e-6)
    assert sk.tail.energy == pytest.approx(float(np.sum(sigma**2) - np.sum(sk.sigma**2)), rel=1e-8)


def test_sketch_bad_variant(rng):
    with pytest.raises(ValidationError):
        sketch_spectrum(np.eye(3), 1, 1, rng, variant="nope")


def test_surrogate_exact_equals_norm_ratio(rng):
    g, a = rng.standard_normal((8, 6)), rng.standard_normal((6, 12))
    for p in (1.5, 5.0):
        qg, qa = exponents(p)
        sg, sa = np.linalg.svd(g, compute_uv=False), np.linalg.svd(a, compute_uv=False)
        want = np.sum(sg**qg) ** (p / (p + 1)) / np.sum(sa**qa) ** ((p - 1) / (2 * (p + 1)))
        assert norm_ratio_objective(g, a, p) == pytest.approx(want, rel=1e-10)
        assert surrogate(p, exact_sketch(g), exact_sketch(a)) == pytest.approx(want, rel=1e-10)


def test_surrogate_needs_p_above_one(rng):
    sk = exact_sketch(np.eye(2))
    with pytest.raises(ValidationError):
        log_surrogate(1.0, sk, sk)


def test_maximize_log_space_interior_and_edge():
    p, _ = maximize_log_space(lambda p: -(math.log(p) - math.log(4.0)) ** 2, 50.0)
    assert p == pytest.approx(4.0, rel=1e-2)
    p, _ = maximize_log_space(lambda p: p, 50.0)
    assert p == 50.0


def test_randomized_pstar_full_rank_matches_norm_ratio(rng):
    g, a = rng.standard_normal((8, 6)), rng.standard_normal((6, 12))
    res = randomized_pstar(a, g, PStarConfig(rank=16), rng)
    p_ref, _ = maximize_log_space(lambda p: math.log(norm_ratio_objective(g, a, p)), 50.0)
    assert res.pstar == pytest.approx(p_ref, rel=1e-12)


def test_spectral_momentum():
    out = spectral_momentum_update([4.0, 2.0], [0.0, 4.0], 0.75)
    np.testing.assert_allclose(out, [3.0, 2.5])
    with pytest.raises(ValidationError):
        spectral_momentum_update([1.0], [1.0, 2.0], 0.5)
    with pytest.raises(ValidationError):
        spectral_momentum_update([1.0], [1.0], 1.5)
