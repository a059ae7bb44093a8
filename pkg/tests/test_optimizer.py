import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from skit.errors import ValidationError
from skit.fractional import FractionalMapPlan, polar_newton_schulz
from skit.linalg import make_rng, schatten_norm
from skit.optimizer import (
    OptimizerConfig,
    SchattenOptimizer,
    alpha_exponent,
    assemble_update,
    bias_corrected,
    init_state,
    lmo_direction,
    lr_for_p,
    momentum_update,
    second_moment_update,
)
from skit.selector import PStarConfig


def test_config_validation():
    for bad in (dict(variant="lion"), dict(beta1=1.0), dict(lr=-1.0), dict(variant="fixed-p"),
                dict(frozen_p=80.0), dict(alpha_mode="x"), dict(weight_decay=-0.1)):
        with pytest.raises(ValidationError):
            OptimizerConfig(**bad)


def test_momentum_and_second_moment():
    cfg = OptimizerConfig(beta1=0.5, beta2=0.75)
    st_ = init_state(np.zeros((2, 2)), cfg)
    g = np.array([[2.0, -2.0], [0.0, 4.0]])
    st_ = second_moment_update(momentum_update(st_, g, 0.5), g, 0.75)
    np.testing.assert_allclose(st_.momentum, 0.5 * g)
    np.testing.assert_allclose(st_.second_moment, 0.25 * g * g)
    np.testing.assert_allclose(bias_corrected(st_.second_moment, 0.75, 1), g * g)
    with pytest.raises(ValidationError):
        momentum_update(st_, np.ones((3, 2)), 0.5)
    with pytest.raises(ValidationError):
        bias_corrected(st_.second_moment, 0.75, 0)


def test_lr_interpolation():
    cfg = OptimizerConfig(lr_muon=0.02, lr_adam=1e-3)
    assert lr_for_p(cfg, 1.0) == pytest.approx(1e-3)
    assert lr_for_p(cfg, 50.0) == pytest.approx(0.02)
    assert lr_for_p(cfg, math.sqrt(50.0)) == pytest.approx(math.sqrt(0.02 * 1e-3))
    assert lr_for_p(OptimizerConfig(variant="adam"), 50.0) == 1e-3
    assert lr_for_p(OptimizerConfig(lr=0.3), 7.0) == 0.3


@given(st.floats(1.0, 50.0), st.floats(1.0, 50.0))
def test_lr_monotone_in_p(p, q):
    cfg = OptimizerConfig()
    lo, hi = sorted((p, q))
    assert lr_for_p(cfg, lo) <= lr_for_p(cfg, hi) * (1 + 1e-12)


def test_alpha_modes():
    assert alpha_exponent(OptimizerConfig(), 3.0) == 0.125
    assert alpha_exponent(OptimizerConfig(variant="muadam"), 3.0) == 0.25
    assert alpha_exponent(OptimizerConfig(variant="adam"), 3.0) == 0.5
    assert alpha_exponent(OptimizerConfig(alpha_exponent_override=0.3), 3.0) == 0.3


@given(st.integers(0, 10_000), st.floats(1.0, 50.0))
def test_lmo_unit_norm_and_descent(seed, p):
    g = make_rng(seed).standard_normal((5, 3))
    x = lmo_direction(g, p)
    s = np.linalg.svd(x, compute_uv=False)
    assert schatten_norm(s, p + 1.0) == pytest.approx(1.0, rel=1e-10)
    assert float(np.sum(g * x)) < 0


def test_zero_momentum_is_skipped():
    opt = SchattenOptimizer({"w": np.ones((2, 2))}, OptimizerConfig(variant="muon"))
    params, reports = opt.step({"w": np.ones((2, 2))}, {"w": np.zeros((2, 2))})
    assert reports[0].skipped and np.array_equal(params["w"], np.ones((2, 2)))


def test_muon_step_is_scaled_polar(rng):
    w, g = rng.standard_normal((4, 3)), rng.standard_normal((4, 3))
    cfg = OptimizerConfig(variant="muon", beta1=0.0)
    params, reports = SchattenOptimizer({"w": w}, cfg).step({"w": w}, {"w": g})
    np.testing.assert_allclose(params["w"], w - 0.02 * polar_newton_schulz(g, 5).polar, atol=1e-14)
    assert reports[0].pstar == 50.0 and reports[0].lr == pytest.approx(0.02)


def test_sgd_momentum_is_plain_momentum(rng):
    w = rng.standard_normal((3, 3))
    cfg = OptimizerConfig(variant="sgd-momentum", beta1=0.5, lr=0.1)
    opt = SchattenOptimizer({"w": w}, cfg)
    g1, g2 = rng.standard_normal((3, 3)), rng.standard_normal((3, 3))
    p1, _ = opt.step({"w": w}, {"w": g1})
    p2, _ = opt.step(p1, {"w": g2})
    m1 = 0.5 * g1
    m2 = 0.5 * m1 + 0.5 * g2
    np.testing.assert_allclose(p2["w"], w - 0.1 * m1 - 0.1 * m2, atol=1e-14)


def test_adam_matches_reference(rng):
    w = rng.standard_normal((3, 2))
    cfg = OptimizerConfig(variant="adam", beta1=0.9, beta2=0.99, lr_adam=0.01)
    opt = SchattenOptimizer({"w": w}, cfg)
    m = v = np.zeros_like(w)
    ref = w.copy()
    params = {"w": w}
    for t in range(1, 4):
        g = rng.standard_normal(w.shape)
        params, _ = opt.step(params, {"w": g})
        m = 0.9 * m + 0.1 * g
        v = 0.99 * v + 0.01 * g * g
        ref = ref - 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.99**t)) + 1e-8)
    np.testing.assert_allclose(params["w"], ref, atol=1e-14)


def test_weight_decay_decoupled(rng):
    w = rng.standard_normal((3, 3))
    cfg = OptimizerConfig(variant="muon", weight_decay=0.5, lr=0.1)
    params, _ = SchattenOptimizer({"w": w}, cfg).step({"w": w}, {"w": np.zeros((3, 3))})
    np.testing.assert_allclose(params["w"], 0.95 * w)


def test_frozen_smuon_equals_muon(rng):
    w, a = rng.standard_normal((4, 3)), rng.standard_normal((3, 8))
    pc = PStarConfig(update_interval=2)
    runs = []
    for cfg in (OptimizerConfig(variant="smuon-adam", frozen_p=50.0, pstar_cfg=pc, alpha_exponent_override=0.0),
                OptimizerConfig(variant="muon", pstar_cfg=pc)):
        r = make_rng(0)
        opt, params = SchattenOptimizer({"w": w}, cfg), {"w": w}
        for _ in range(5):
            params, _ = opt.step(params, {"w": r.standard_normal(w.shape)}, {"w": a})
        runs.append(params["w"])
    # S = (D + eps)^0 is all ones, so the preconditioned path collapses to muon
    np.testing.assert_allclose(runs[0], runs[1], atol=1e-14)


def test_refresh_cadence_and_deferral(rng):
    w = rng.standard_normal((4, 3))
    cfg = OptimizerConfig(variant="smuon", pstar_cfg=PStarConfig(update_interval=3))
    opt, params = SchattenOptimizer({"w": w}, cfg), {"w": w}
    seen = []
    for i in range(7):
        need = opt.needs_activations()
        acts = {"w": rng.standard_normal((3, 6))} if need and i != 2 else None
        if need and i == 2:
            with pytest.warns(RuntimeWarning, match="deferring"):
                params, rep = opt.step(params, {"w": rng.standard_normal(w.shape)}, acts)
        else:
            params, rep = opt.step(params, {"w": rng.standard_normal(w.shape)}, acts)
        seen.append((need, rep[0].refreshed))
    assert seen == [(False, False), (False, False), (True, False), (True, True),
                    (False, False), (True, True), (False, False)]


def test_refresh_reports_selection(rng):
    w = rng.standard_normal((5, 4))
    cfg = OptimizerConfig(variant="smuon", pstar_cfg=PStarConfig(update_interval=1))
    opt = SchattenOptimizer({"w": w}, cfg)
    _, rep = opt.step({"w": w}, {"w": rng.standard_normal(w.shape)}, {"w": rng.standard_normal((4, 10))})
    r = rep[0]
    assert r.refreshed and 1.02 <= r.pstar <= 50.0
    assert r.objective is None or r.objective > 0
    assert '"param": "w"' in r.to_json()


def test_randomized_mode_runs(rng):
    w = rng.standard_normal((12, 10))
    pc = PStarConfig(update_interval=1, mode="randomized", rank=3, beta_p=0.5)
    opt = SchattenOptimizer({"w": w}, OptimizerConfig(variant="smuon", pstar_cfg=pc))
    params = {"w": w}
    for _ in range(3):
        params, rep = opt.step(params, {"w": rng.standard_normal(w.shape)}, {"w": rng.standard_normal((10, 20))})
        assert rep[0].refreshed and 1.02 <= rep[0].pstar <= 50.0


def test_fixed_p_update_is_fractional_momentum(rng):
    w = rng.standard_normal((4, 3))
    cfg = OptimizerConfig(variant="fixed-p", frozen_p=2.0, plan=FractionalMapPlan(method="svd"), lr=1.0)
    st_ = init_state(w, cfg)
    g = rng.standard_normal(w.shape)
    st_ = momentum_update(st_, g, cfg.beta1)
    st_.step = 1
    dw = assemble_update(st_, cfg)
    mo = (1 - cfg.beta1) * g
    u, s, vt = np.linalg.svd(mo, full_matrices=False)
    np.testing.assert_allclose(dw, -(u * np.sqrt(s)) @ vt, atol=1e-13)
