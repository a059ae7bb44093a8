"""Layerwise p* selection from momentum, gradient and activation statistics.

With ``M = U diag(sigma) V^T`` the fractional step ``-eta U diag(sigma)^(1/p) V^T``
changes a quadratic layer loss by ``-eta N(p) + eta^2 D(p) / (2k)``, where

    N(p) = sum_i sigma_i^(1/p) C_ii,   C = diag(U^T G V)
    D(p) = sum_i sigma_i^(2/p) B_ii,   B_ii = ||A^T V e_i||^2.

The best decrease over eta is ``(k/2) N^2 / D`` at ``eta = k N / D``; p* maximizes
``J(p) = N^2 / D`` over ``[p_min, p_max]``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import minimize_scalar

from ._accel import resolve_backend
from .errors import NumericError, ValidationError
from .kernels import numerator_denominator
from .linalg import as_matrix, svd

MODES = ("exact", "randomized")
FLAT_RTOL = 1e-9
COARSE_GRID = 17


@dataclass(frozen=True)
class PStarConfig:
    p_min: float = 1.02
    p_max: float = 50.0
    update_interval: int = 100
    beta_p: float = 0.0
    mode: str = "exact"
    search_tol: float = 1e-3
    max_iter: int = 100
    rank: int = 16
    power_iters: int = 4
    probes: int = 5
    sketch: str = "anchored"

    def __post_init__(self):
        if not 1.0 < self.p_min < self.p_max <= 50.0:
            raise ValidationError(f"need 1 < p_min < p_max <= 50, got {self.p_min}, {self.p_max}")
        if self.update_interval < 1:
            raise ValidationError("update_interval must be >= 1")
        if not 0.0 <= self.beta_p < 1.0:
            raise ValidationError("beta_p must lie in [0, 1)")
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}")
        if self.sketch not in ("anchored", "verbatim"):
            raise ValidationError("sketch must be 'anchored' or 'verbatim'")
        if self.search_tol <= 0 or self.rank < 1 or self.power_iters < 0 or self.probes < 1:
            raise ValidationError("search_tol, rank and probes must be positive")


class SpectralStats(NamedTuple):
    sigma: np.ndarray
    c_diag: np.ndarray
    b_diag: np.ndarray
    k_samples: int

    def validate(self) -> "SpectralStats":
        n = self.sigma.shape
        if self.c_diag.shape != n or self.b_diag.shape != n:
            raise ValidationError("sigma, c_diag and b_diag must share one length")
        if np.any(self.sigma < 0) or np.any(self.b_diag < 0):
            raise ValidationError("sigma and b_diag must be nonnegative")
        if self.k_samples < 1:
            raise ValidationError("k_samples must be >= 1")
        return self


def make_stats(sigma, c_diag, b_diag, k_samples: int = 1) -> SpectralStats:
    return SpectralStats(
        np.asarray(sigma, dtype=np.float64),
        np.asarray(c_diag, dtype=np.float64),
        np.asarray(b_diag, dtype=np.float64),
        int(k_samples),
    ).validate()


def compute_stats(m, g, a, backend: str | None = None) -> SpectralStats:
    """Statistics from the SVD of the momentum ``m``; ``a`` holds one sample per column."""
    m = as_matrix(m, "momentum")
    g = as_matrix(g, "gradient")
    a = as_matrix(a, "activations")
    if m.shape != g.shape:
        raise ValidationError(f"momentum {m.shape} and gradient {g.shape} differ in shape")
    if a.shape[0] != m.shape[1]:
        raise ValidationError(f"activations need {m.shape[1]} rows, got {a.shape[0]}")
    res = svd(m, backend=backend)
    if res.rank == 0:
        raise NumericError("momentum is zero; its singular basis is undefined")
    c = np.einsum("ij,ij->j", res.u, g @ res.vt.T)
    b = np.sum((res.vt @ a) ** 2, axis=1)
    return SpectralStats(res.sigma, c, b, a.shape[1])


def _inv(p: float) -> float:
    if p < 1:
        raise ValidationError(f"p must be >= 1, got {p}")
    return 0.0 if math.isinf(p) else 1.0 / p


def num_den(stats: SpectralStats, p: float, backend: str | None = None) -> tuple[float, float]:
    return numerator_denominator(stats.sigma, stats.c_diag, stats.b_diag, _inv(p), resolve_backend(backend))


def objective(stats: SpectralStats, p: float, backend: str | None = None) -> float:
    num, den = num_den(stats, p, backend)
    if not den > 0.0:
        raise NumericError("degenerate curvature: D(p) = 0")
    return num * num / den


def eta_star(stats: SpectralStats, p: float, backend: str | None = None) -> float:
    num, den = num_den(stats, p, backend)
    if not den > 0.0:
        raise NumericError("degenerate curvature: D(p) = 0")
    return stats.k_samples * num / den


class Selection(NamedTuple):
    pstar: float
    objective: float
    eta_star: float
    fallback: bool  # N(p*) <= 0, previous p* kept
    degenerate: bool = False
    flat: bool = False


def _to_p(x: float) -> float:
    return 1.0 + math.exp(x)


def select_pstar(stats: SpectralStats, cfg: PStarConfig, previous: float, backend: str | None = None) -> Selection:
    """Bounded Brent search of J over ``x = ln(p - 1)``.

    A coarse grid picks the starting cell so that multimodal objectives do not
    trap the search at an inferior edge. Near-ties go to the larger p.
    """
    backend = resolve_backend(backend)
    lo, hi = math.log(cfg.p_min - 1.0), math.log(cfg.p_max - 1.0)
    xs = np.linspace(lo, hi, COARSE_GRID)
    try:
        vals = np.array([objective(stats, _to_p(x), backend) for x in xs])
    except NumericError:
        warnings.warn("degenerate statistics; keeping the previous p*", RuntimeWarning, stacklevel=2)
        return Selection(previous, math.nan, math.nan, True, degenerate=True)
    top = float(vals.max())
    if top - float(vals.min()) <= FLAT_RTOL * max(abs(top), 1e-300):
        x_best, v_best, flat = hi, float(vals[-1]), True
    else:
        best = int(np.flatnonzero(vals >= top * (1 - 1e-12))[-1])
        a, b = xs[max(best - 1, 0)], xs[min(best + 1, COARSE_GRID - 1)]
        res = minimize_scalar(
            lambda x: -objective(stats, _to_p(x), backend),
            bounds=(a, b),
            method="bounded",
            options={"xatol": cfg.search_tol, "maxiter": cfg.max_iter},
        )
        x_best, v_best, flat = xs[best], float(vals[best]), False
        if -res.fun > v_best * (1 + 1e-12):
            x_best, v_best = float(res.x), float(-res.fun)
    # snap the bracket ends so p_max and p_min come back exactly
    p = cfg.p_max if x_best >= hi else cfg.p_min if x_best <= lo else _to_p(x_best)
    num, den = num_den(stats, p, backend)
    if num <= 0.0:
        return Selection(previous, v_best, math.nan, True, flat=flat)
    return Selection(p, v_best, stats.k_samples * num / den, False, flat=flat)


@dataclass
class EmaStats:
    beta_p: float
    stats: SpectralStats | None = None
    updates: int = 0

    @property
    def initialized(self) -> bool:
        return self.stats is not None


def ema_update(state: EmaStats, fresh: SpectralStats) -> EmaStats:
    """New state with every statistic blended as ``beta * old + (1 - beta) * fresh``."""
    if state.stats is None:
        copy = SpectralStats(fresh.sigma.copy(), fresh.c_diag.copy(), fresh.b_diag.copy(), fresh.k_samples)
        return EmaStats(state.beta_p, copy, 1)
    old = state.stats
    if old.sigma.shape != fresh.sigma.shape:
        raise ValidationError(f"statistic length changed from {old.sigma.size} to {fresh.sigma.size}")
    b = state.beta_p
    mixed = SpectralStats(
        b * old.sigma + (1 - b) * fresh.sigma,
        b * old.c_diag + (1 - b) * fresh.c_diag,
        b * old.b_diag + (1 - b) * fresh.b_diag,
        fresh.k_samples,
    )
    return EmaStats(b, mixed, state.updates + 1)


def preconditioned_objective(mt, gt, d_inv, a, p: float) -> float:
    """``J`` for a preconditioned step, reforming the direction at this ``p``.

    The step is ``d_inv * (U diag(sigma)^(1/p) V^T)`` from the SVD of ``mt``; the
    curvature term uses the full product with ``a`` rather than diagonals.
    """
    mt = as_matrix(mt, "mt")
    gt = as_matrix(gt, "gt")
    d_inv = as_matrix(d_inv, "d_inv")
    a = as_matrix(a, "a")
    if not (mt.shape == gt.shape == d_inv.shape) or a.shape[0] != mt.shape[1]:
        raise ValidationError("inconsistent shapes for the preconditioned objective")
    res = svd(mt)
    inv = _inv(p)
    w = np.where(res.sigma > 0, res.sigma**inv, 0.0)
    c = np.einsum("ij,ij->j", res.u, gt @ res.vt.T)
    num = float(w @ c)
    y = (res.u * w) @ res.vt
    den = float(np.sum(((d_inv * y) @ a) ** 2))
    if not den > 0.0:
        raise NumericError("zero curvature in the preconditioned objective")
    return num * num / den
