"""Schatten-(p+1) steepest-descent optimizers with a layerwise exponent.

Every matrix variant shares one update

    S  = (D_hat + eps) ** (-alpha_exp)       (all ones without second moments)
    dW = -lr * S * F_p(S * M)

and differs only in how ``p``, ``alpha_exp`` and ``S`` are fixed. ``adam``
bypasses the fractional map entirely.
"""
from __future__ import annotations

import json
import math
import warnings
import zlib
from dataclasses import asdict, dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .errors import ValidationError
from .fractional import FractionalMapPlan, fractional_map
from .linalg import as_matrix, make_rng, schatten_norm, svd
from .randomized import SpectrumSketch, log_surrogate, maximize_log_space, randomized_pstar, spectral_momentum_update
from .selector import EmaStats, PStarConfig, compute_stats, ema_update, select_pstar

VARIANTS = ("smuon", "smuon-adam", "fixed-p", "muon", "sgd-momentum", "adam", "muadam")
ALPHA_MODES = ("p-dependent", "fixed-quarter", "fixed-half")
_SECOND_MOMENT = {"smuon-adam", "adam", "muadam"}
_SELECTS = {"smuon", "smuon-adam"}


@dataclass(frozen=True)
class OptimizerConfig:
    variant: str = "smuon-adam"
    beta1: float = 0.95
    beta2: float = 0.95
    eps: float = 1e-8
    lr_muon: float = 0.02
    lr_adam: float = 1e-3
    lr: float | None = None  # a single rate for every p, replacing the interpolation
    weight_decay: float = 0.0
    pstar_cfg: PStarConfig = field(default_factory=PStarConfig)
    plan: FractionalMapPlan = field(default_factory=FractionalMapPlan)
    alpha_mode: str | None = None  # None picks the variant's natural mode
    frozen_p: float | None = None  # pins p (required by fixed-p)
    alpha_exponent_override: float | None = None  # mutation hook for invariance tests
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValidationError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValidationError("beta1 and beta2 must lie in [0, 1)")
        if self.eps <= 0 or self.lr_muon <= 0 or self.lr_adam <= 0 or (self.lr is not None and self.lr <= 0):
            raise ValidationError("eps and learning rates must be positive")
        if self.weight_decay < 0:
            raise ValidationError("weight_decay must be >= 0")
        if self.alpha_mode is not None and self.alpha_mode not in ALPHA_MODES:
            raise ValidationError(f"alpha_mode must be one of {ALPHA_MODES}")
        if self.variant == "fixed-p" and self.frozen_p is None:
            raise ValidationError("fixed-p needs frozen_p")
        if self.frozen_p is not None and not 1.0 <= self.frozen_p <= self.p_max:
            raise ValidationError(f"frozen_p must lie in [1, {self.p_max}]")

    @property
    def p_max(self) -> float:
        return self.pstar_cfg.p_max

    @property
    def uses_second_moment(self) -> bool:
        return self.variant in _SECOND_MOMENT

    @property
    def selects_p(self) -> bool:
        return self.variant in _SELECTS and self.frozen_p is None

    @property
    def resolved_alpha_mode(self) -> str:
        if self.alpha_mode is not None:
            return self.alpha_mode
        return {"muadam": "fixed-quarter", "adam": "fixed-half"}.get(self.variant, "p-dependent")


@dataclass
class OptimizerState:
    momentum: np.ndarray
    second_moment: np.ndarray | None
    pstar: float
    step: int = 0
    ema: EmaStats = field(default_factory=lambda: EmaStats(0.0))
    activation: np.ndarray | None = None
    refresh_pending: bool = False
    sketch_sigma: tuple | None = None  # smoothed randomized spectra (G, A)


def init_state(param, cfg: OptimizerConfig) -> OptimizerState:
    w = as_matrix(param, "param")
    d = np.zeros_like(w) if cfg.uses_second_moment else None
    return OptimizerState(np.zeros_like(w), d, cfg.p_max, 0, EmaStats(cfg.pstar_cfg.beta_p))


class StepReport(NamedTuple):
    param: str
    step: int
    update_norm: float
    pstar: float
    lr: float
    eta_star: float | None
    objective: float | None
    fallback: bool
    skipped: bool
    refreshed: bool

    def to_json(self) -> str:
        d = self._asdict()
        for k, v in d.items():
            if isinstance(v, float) and not math.isfinite(v):
                d[k] = None
        return json.dumps(d)


def momentum_update(state: OptimizerState, g, beta1: float) -> OptimizerState:
    g = as_matrix(g, "gradient")
    if g.shape != state.momentum.shape:
        raise ValidationError(f"gradient {g.shape} does not match momentum {state.momentum.shape}")
    return replace(state, momentum=beta1 * state.momentum + (1.0 - beta1) * g)


def second_moment_update(state: OptimizerState, g, beta2: float) -> OptimizerState:
    g = as_matrix(g, "gradient")
    d = state.second_moment if state.second_moment is not None else np.zeros_like(g)
    if d.shape != g.shape:
        raise ValidationError("gradient does not match the second moment")
    return replace(state, second_moment=beta2 * d + (1.0 - beta2) * g * g)


def bias_corrected(d: np.ndarray, beta: float, t: int) -> np.ndarray:
    if t < 1:
        raise ValidationError("bias correction needs t >= 1")
    return d / (1.0 - beta**t)


def lr_for_p(cfg: OptimizerConfig, p: float) -> float:
    if cfg.lr is not None:
        return cfg.lr
    if cfg.variant == "adam":
        return cfg.lr_adam
    w = min(max(math.log(p) / math.log(cfg.p_max), 0.0), 1.0)
    return cfg.lr_adam ** (1.0 - w) * cfg.lr_muon**w


def effective_p(state: OptimizerState, cfg: OptimizerConfig) -> float:
    if cfg.frozen_p is not None:
        return cfg.frozen_p
    if cfg.variant in ("muon", "muadam"):
        return cfg.p_max
    if cfg.variant == "sgd-momentum":
        return 1.0
    return state.pstar


def alpha_exponent(cfg: OptimizerConfig, p: float) -> float:
    if cfg.alpha_exponent_override is not None:
        return cfg.alpha_exponent_override
    mode = cfg.resolved_alpha_mode
    if mode == "fixed-quarter":
        return 0.25
    if mode == "fixed-half":
        return 0.5
    return 1.0 / (2.0 * (p + 1.0))


def assemble_update(state: OptimizerState, cfg: OptimizerConfig) -> np.ndarray | None:
    """The raw step (learning rate included); ``None`` when the momentum is zero."""
    m = state.momentum
    if not np.any(m):
        return None
    p = effective_p(state, cfg)
    lr = lr_for_p(cfg, p)
    if cfg.variant == "adam":
        t = max(state.step, 1)
        m_hat = m / (1.0 - cfg.beta1**t)
        d_hat = bias_corrected(state.second_moment, cfg.beta2, t)
        return -lr * m_hat / (np.sqrt(d_hat) + cfg.eps)
    if cfg.uses_second_moment:
        d_hat = bias_corrected(state.second_moment, cfg.beta2, max(state.step, 1))
        s = (d_hat + cfg.eps) ** (-alpha_exponent(cfg, p))
    else:
        s = None
    mt = m if s is None else s * m
    y = fractional_map(mt, cfg.plan.with_p(p))
    return -lr * (y if s is None else s * y)


def lmo_direction(g, p: float) -> np.ndarray:
    """Unit Schatten-(p+1) direction minimizing ``<G, X>``, computed by exact SVD."""
    res = svd(g)
    inv = 0.0 if math.isinf(p) else 1.0 / p
    w = np.where(res.sigma > 0, res.sigma**inv, 0.0)
    norm = schatten_norm(w, p + 1.0)
    if norm == 0.0:
        raise ValidationError("LMO direction of the zero matrix is undefined")
    return -((res.u * (w / norm)) @ res.vt)


def _refresh(name, state: OptimizerState, g, cfg: OptimizerConfig, step: int):
    """Fold fresh statistics into the EMA and re-select p*; returns (state, eta*, J(p*), fallback)."""
    pc = cfg.pstar_cfg
    if pc.mode == "randomized":
        rng = make_rng((cfg.seed << 32) ^ (zlib.crc32(name.encode()) << 8) ^ step)
        res = randomized_pstar(state.activation, g, pc, rng)
        sg, sa = res.g.sigma, res.a.sigma
        if state.sketch_sigma is not None and state.sketch_sigma[0].shape == sg.shape:
            sg = spectral_momentum_update(state.sketch_sigma[0], sg, pc.beta_p)
            sa = spectral_momentum_update(state.sketch_sigma[1], sa, pc.beta_p)
        g_sk = SpectrumSketch(sg, res.g.tail, res.g.exact)
        a_sk = SpectrumSketch(sa, res.a.tail, res.a.exact)
        p, _ = maximize_log_space(lambda q: log_surrogate(q, g_sk, a_sk), pc.p_max, pc.search_tol)
        p = min(max(p, pc.p_min), pc.p_max)
        return replace(state, pstar=p, sketch_sigma=(sg, sa)), None, None, False
    fresh = compute_stats(state.momentum, g, state.activation)
    ema = ema_update(state.ema, fresh)
    sel = select_pstar(ema.stats, pc, state.pstar)
    eta = None if sel.fallback else sel.eta_star
    obj = None if math.isnan(sel.objective) else sel.objective
    return replace(state, ema=ema, pstar=sel.pstar), eta, obj, sel.fallback


def optimizer_step(params: dict, grads: dict, activations: dict, states: dict, cfg: OptimizerConfig, step_index: int):
    """One step over named matrix parameters; returns ``(params, states, reports)``.

    ``step_index`` is zero-based. A refresh happens after every
    ``update_interval`` completed steps and needs ``activations[name]``, the
    layer input whose columns are the batch samples.
    """
    new_params, new_states, reports = {}, {}, []
    for name, w in params.items():
        g = as_matrix(grads[name], f"grad[{name}]")
        st = states[name]
        st = momentum_update(st, g, cfg.beta1)
        if cfg.uses_second_moment:
            st = second_moment_update(st, g, cfg.beta2)
        st = replace(st, step=st.step + 1)
        refreshed, eta, obj, fallback = False, None, None, False
        due = cfg.selects_p and (st.refresh_pending or st.step % cfg.pstar_cfg.update_interval == 0)
        if due:
            act = activations.get(name) if activations else None
            if act is None:
                warnings.warn(f"no activation snapshot for {name} at step {step_index}; deferring", RuntimeWarning)
                st = replace(st, refresh_pending=True)
            else:
                st = replace(st, activation=as_matrix(act, "activation"), refresh_pending=False)
                st, eta, obj, fallback = _refresh(name, st, g, cfg, step_index)
                st = replace(st, activation=None)
                refreshed = True
        p = effective_p(st, cfg)
        lr = lr_for_p(cfg, p)
        dw = assemble_update(st, cfg)
        w_new = w * (1.0 - lr * cfg.weight_decay) if cfg.weight_decay else w.copy()
        if dw is not None:
            w_new = w_new + dw
        new_params[name] = w_new
        new_states[name] = st
        norm = float(np.linalg.norm(dw)) if dw is not None else 0.0
        reports.append(StepReport(name, step_index, norm, p, lr, eta, obj, fallback, dw is None, refreshed))
    return new_params, new_states, reports


class SchattenOptimizer:
    """Stateful convenience wrapper over ``optimizer_step``."""

    def __init__(self, params: dict, cfg: OptimizerConfig):
        self.cfg = cfg
        self.states = {k: init_state(v, cfg) for k, v in params.items()}
        self.step_index = 0

    def needs_activations(self) -> bool:
        if not self.cfg.selects_p:
            return False
        interval = self.cfg.pstar_cfg.update_interval
        return any(s.refresh_pending or (s.step + 1) % interval == 0 for s in self.states.values())

    def step(self, params: dict, grads: dict, activations: dict | None = None):
        params, self.states, reports = optimizer_step(
            params, grads, activations or {}, self.states, self.cfg, self.step_index
        )
        self.step_index += 1
        return params, reports

    def pstars(self) -> dict:
        return {k: effective_p(s, self.cfg) for k, s in self.states.items()}


def config_dict(cfg: OptimizerConfig) -> dict:
    return asdict(cfg)
