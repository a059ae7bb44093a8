"""Fractional map F_p(G) = U diag(sigma)^(1/p) V^T by three routes.

``svd``     exact, via the Jacobi SVD;
``taylor``  Newton-Schulz polar factor, then a binomial series for the
            fractional power of the (near-symmetric) factor ``G P^T / alpha``;
``remez``   direct odd-quintic iteration with per-step minimax coefficients.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .errors import NumericError, ValidationError
from .linalg import as_matrix, spectral_norm_upper_bound, svd
from .minimax import CoefficientSchedule, fit_remez_schedule, polar_schedule

METHODS = ("svd", "taylor", "remez")
P_MAX = 50.0
COEFF_FLOOR = 1e-300
ORDER_GRID_POINTS = 128
# chosen by sweeping heavy-tailed 256x256 inputs: a lower design edge than the
# Taylor grid lets the polar step cover the tail that alpha >= sigma_1 pushes below 0.02
POLAR_EPS = 0.005


@dataclass(frozen=True)
class FractionalMapPlan:
    method: str = "taylor"
    p: float = 2.0
    ns_budget: int = 5
    alpha_variant: str = "schatten-4"
    order: int | None = None  # fixed K; None selects K adaptively from ``tol``
    tol: float = 1e-3
    eps: float = 0.02  # lower edge of the Taylor order grid
    polar_eps: float = POLAR_EPS  # design edge of the Newton-Schulz schedule
    max_order: int = 64
    remez_degree: int = 5
    p_max: float = P_MAX
    polar_shortcut: bool = True  # taylor route returns P itself once p >= p_max

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValidationError(f"method must be one of {METHODS}, got {self.method!r}")
        if not 1.0 <= self.p <= self.p_max:
            raise ValidationError(f"p={self.p} outside [1, {self.p_max}]")
        if not 1 <= self.ns_budget <= 10:
            raise ValidationError("ns_budget must lie in [1, 10]")
        if not 0 < self.tol < 1 or not 0 < self.eps < 1 or not 0 < self.polar_eps < 1:
            raise ValidationError("tol and eps must lie in (0, 1)")
        if self.order is not None and self.order < 0:
            raise ValidationError("order must be >= 0")
        if self.remez_degree != 5:
            raise ValidationError("only degree-5 odd polynomials are supported")
        if self.alpha_variant not in ("schatten-2", "schatten-4"):
            raise ValidationError(f"unknown alpha variant {self.alpha_variant!r}")

    def with_p(self, p: float) -> "FractionalMapPlan":
        return replace(self, p=float(p))


class PolarResult(NamedTuple):
    polar: np.ndarray
    alpha: float
    residual: float


class OrderChoice(NamedTuple):
    order: int
    truncated: bool
    error: float


# ---------------------------------------------------------------------------
# Newton-Schulz polar factor
# ---------------------------------------------------------------------------


def _odd_iteration(x: np.ndarray, coeffs_seq) -> np.ndarray:
    # keep the Gram matrix on the short side
    wide = x.shape[0] <= x.shape[1]
    if not wide:
        x = x.T
    for a, b, c in coeffs_seq:
        gram = x @ x.T
        x = a * x + (b * gram + c * (gram @ gram)) @ x
    return x if wide else x.T


def _gram_residual(p: np.ndarray) -> float:
    gram = p @ p.T if p.shape[0] <= p.shape[1] else p.T @ p
    return float(np.linalg.norm(gram - np.eye(gram.shape[0])))


def polar_newton_schulz(
    g, budget: int = 5, alpha_variant: str = "schatten-4", eps: float = POLAR_EPS, coeffs=None
) -> PolarResult:
    """Polar factor estimate ``P ~ U V^T`` after ``budget`` quintic iterations.

    ``coeffs`` overrides the default minimax schedule (one triple per
    iteration, or a single triple repeated).
    """
    g = as_matrix(g, "g")
    if budget < 1:
        raise ValidationError("budget must be >= 1")
    alpha = spectral_norm_upper_bound(g, alpha_variant)
    if alpha == 0.0:
        raise NumericError("polar factor of the zero matrix is undefined")
    if coeffs is None:
        seq = polar_schedule(eps, budget)
    else:
        seq = list(coeffs)
        if len(seq) == 3 and np.isscalar(seq[0]):
            seq = [tuple(seq)] * budget
        seq = seq[:budget]
    p = _odd_iteration(g / alpha, seq)
    return PolarResult(p, alpha, _gram_residual(p))


# ---------------------------------------------------------------------------
# binomial Taylor series
# ---------------------------------------------------------------------------


def binomial_coefficients(r: float, order: int) -> np.ndarray:
    """C(r, i) for i = 0..order by the product recurrence; tiny tails are dropped."""
    out = np.empty(order + 1)
    out[0] = 1.0
    n = order
    for i in range(1, order + 1):
        out[i] = out[i - 1] * (r - i + 1) / i
        if abs(out[i]) < COEFF_FLOOR:
            n = i - 1
            break
    return out[: n + 1]


def taylor_scalar_error(p: float, eps: float, order: int, n: int = ORDER_GRID_POINTS) -> float:
    """Worst-case |partial sum - x^(1/p)| over a log grid on [eps, 1]."""
    x = np.geomspace(eps, 1.0, n)
    coeffs = binomial_coefficients(1.0 / p, order)
    z = x - 1.0
    acc = np.full_like(x, coeffs[-1])
    for c in coeffs[-2::-1]:
        acc = acc * z + c
    return float(np.max(np.abs(acc - x ** (1.0 / p))))


@lru_cache(maxsize=512)
def _adaptive_order(p: float, eps: float, tol: float, max_order: int) -> OrderChoice:
    x = np.geomspace(eps, 1.0, ORDER_GRID_POINTS)
    target = x ** (1.0 / p)
    z = x - 1.0
    coeffs = binomial_coefficients(1.0 / p, max_order)
    partial = np.ones_like(x)
    zpow = np.ones_like(x)
    err = float(np.max(np.abs(partial - target)))
    if err <= tol:
        return OrderChoice(0, False, err)
    for k in range(1, max_order + 1):
        if k < len(coeffs):
            zpow = zpow * z
            partial = partial + coeffs[k] * zpow
        err = float(np.max(np.abs(partial - target)))
        if err <= tol:
            return OrderChoice(k, False, err)
    return OrderChoice(max_order, True, err)


def adaptive_order(p: float, eps: float = 0.02, tol: float = 1e-3, max_order: int = 64) -> OrderChoice:
    """Smallest order meeting ``tol`` on the scalar grid, or ``max_order`` flagged as truncated."""
    if not 0 < eps < 1:
        raise ValidationError("eps must lie in (0, 1)")
    if tol <= 0:
        raise ValidationError("tol must be positive")
    if p < 1:
        raise ValidationError("p must be >= 1")
    return _adaptive_order(float(p), float(eps), float(tol), int(max_order))


def _horner(e: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    n = e.shape[0]
    acc = coeffs[-1] * np.eye(n)
    for c in coeffs[-2::-1]:
        acc = e @ acc
        acc.flat[:: n + 1] += c
    return acc


def taylor_fractional(g, polar: PolarResult, p: float, order: int) -> np.ndarray:
    """``alpha^(1/p) * sum_i C(1/p, i) (G P^T/alpha - I)^i * P`` evaluated by Horner.

    The series is formed on the short side: ``G P^T`` when the matrix is wide
    and ``P^T G`` (multiplied from the other side) when it is tall.
    """
    g = as_matrix(g, "g")
    if p < 1:
        raise ValidationError("p must be >= 1")
    if order < 0:
        raise ValidationError("order must be >= 0")
    pm, alpha = polar.polar, polar.alpha
    if pm.shape != g.shape:
        raise ValidationError(f"polar factor shape {pm.shape} does not match g {g.shape}")
    coeffs = binomial_coefficients(1.0 / p, int(order))
    scale = alpha ** (1.0 / p)
    if g.shape[0] <= g.shape[1]:
        e = g @ pm.T / alpha
        e.flat[:: e.shape[0] + 1] -= 1.0
        return scale * (_horner(e, coeffs) @ pm)
    e = pm.T @ g / alpha
    e.flat[:: e.shape[0] + 1] -= 1.0
    return scale * (pm @ _horner(e, coeffs))


# ---------------------------------------------------------------------------
# direct quintic iteration
# ---------------------------------------------------------------------------


def remez_fractional(g, schedule: CoefficientSchedule, alpha_variant: str = "schatten-4") -> np.ndarray:
    g = as_matrix(g, "g")
    alpha = spectral_norm_upper_bound(g, alpha_variant)
    if alpha == 0.0:
        raise NumericError("remez route is undefined for the zero matrix")
    x = _odd_iteration(g / alpha, schedule.coeffs)
    return alpha ** (1.0 / schedule.p) * x


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def svd_fractional(g, p: float) -> np.ndarray:
    res = svd(g)
    inv = 0.0 if np.isinf(p) else 1.0 / p
    with np.errstate(divide="ignore"):
        w = np.where(res.sigma > 0, res.sigma**inv, 0.0)
    return (res.u * w) @ res.vt


def fractional_map(g, plan: FractionalMapPlan) -> np.ndarray:
    g = as_matrix(g, "g")
    if plan.p == 1.0:
        return g.copy()
    if plan.method == "svd":
        return svd_fractional(g, plan.p)
    if plan.method == "remez":
        sched = fit_remez_schedule(plan.p, plan.ns_budget, plan.eps)
        return remez_fractional(g, sched, plan.alpha_variant)
    polar = polar_newton_schulz(g, plan.ns_budget, plan.alpha_variant, plan.polar_eps)
    if plan.polar_shortcut and plan.p >= plan.p_max:
        return polar.polar
    order = plan.order
    if order is None:
        order = adaptive_order(plan.p, plan.eps, plan.tol, plan.max_order).order
    return taylor_fractional(g, polar, plan.p, order)
