"""Frobenius-anchored randomized estimate of p* from the spectra of G and A.

A rank-k subspace iteration gives the head of each spectrum; the tail is
summarized by its exact Frobenius energy E, a radius estimate R and its length
d. The surrogate replaces each tail sum by the worst-case packing of E into
pieces no larger than R^2. Everything is evaluated in log space because the
activation exponent q_A = 2(p+1)/(p-1) grows without bound as p -> 1.
"""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp

from .errors import NumericError, ValidationError
from .linalg import as_matrix, gaussian_matrix, orthonormalize, power_iteration_norm, singular_values

N_PROBES = 5
OVERSAMPLE = 5
ENERGY_RTOL = 1e-12  # tail energies below this fraction of ||M||_F^2 are rounding noise
X_LOW = math.log(0.01)


class TailBound(NamedTuple):
    energy: float
    radius: float
    d: int


class SpectrumSketch(NamedTuple):
    sigma: np.ndarray  # leading singular values, descending
    tail: TailBound
    exact: bool  # sigma is the full spectrum and the tail is empty


def tail_mass(tb: TailBound, q: float) -> float:
    if q <= 0:
        raise ValidationError("q must be positive")
    e, r, d = tb
    if e == 0.0 or d == 0:
        return 0.0
    if r == 0.0:
        raise NumericError("tail energy is positive but the radius is zero")
    if e / (r * r) > d:
        return d * (e / d) ** (q / 2.0)
    return e * r ** (q - 2.0)


def log_tail_mass(tb: TailBound, q: float) -> float:
    """``log(tail_mass(tb, q))``; ``-inf`` for an empty tail."""
    e, r, d = tb
    if e == 0.0 or d == 0:
        return -math.inf
    if r == 0.0:
        raise NumericError("tail energy is positive but the radius is zero")
    if e / (r * r) > d:
        return math.log(d) + 0.5 * q * (math.log(e) - math.log(d))
    return math.log(e) + (q - 2.0) * math.log(r)


SKETCH_VARIANTS = ("anchored", "verbatim")
RADIUS_POWER_ITERS = 30


def sketch_spectrum(
    m, rank: int, power_iters: int, rng: np.random.Generator, variant: str = "anchored", probes: int = N_PROBES
) -> SpectrumSketch:
    """Subspace iteration with ``rank + 5`` columns, then the tail summary.

    ``verbatim`` keeps the top ``rank`` values and takes R from Gaussian probes
    of the residual scaled by ``1/sqrt(cols)``. ``anchored`` keeps every
    sketched value and takes R as a power-iteration estimate of the residual's
    spectral norm, which bounds every uncomputed singular value.
    """
    if variant not in SKETCH_VARIANTS:
        raise ValidationError(f"variant must be one of {SKETCH_VARIANTS}")
    m = as_matrix(m)
    rows, cols = m.shape
    full = min(rows, cols)
    width = rank + OVERSAMPLE
    if rank >= full or width >= full:
        return SpectrumSketch(singular_values(m), TailBound(0.0, 0.0, 0), True)
    fro2 = float(np.sum(m * m))
    y = m @ gaussian_matrix(cols, width, rng)
    for _ in range(power_iters):
        y = orthonormalize(y).q
        z = orthonormalize(m.T @ y).q
        y = m @ z
    q = orthonormalize(y).q
    sig = singular_values(q.T @ m)
    resid = m - q @ (q.T @ m)
    if variant == "verbatim":
        sig = sig[:rank]
        mo = resid @ gaussian_matrix(cols, probes, rng)
        radius = float(np.max(np.linalg.norm(mo, axis=0))) / math.sqrt(cols)
        d = full - rank
    else:
        radius = power_iteration_norm(resid, RADIUS_POWER_ITERS, rng)
        d = full - width
    energy = max(0.0, fro2 - float(np.sum(sig * sig)))
    if energy <= ENERGY_RTOL * fro2:
        energy = 0.0
    elif radius == 0.0:
        radius = math.sqrt(energy)
    return SpectrumSketch(sig, TailBound(energy, radius, d), False)


def _log_power_sum(sigma: np.ndarray, q: float) -> float:
    s = sigma[sigma > 0]
    if s.size == 0:
        return -math.inf
    return float(logsumexp(q * np.log(s)))


def exponents(p: float) -> tuple[float, float]:
    return 1.0 + 1.0 / p, 2.0 * (p + 1.0) / (p - 1.0)


def log_surrogate(p: float, g: SpectrumSketch, a: SpectrumSketch) -> float:
    """log of the lower surrogate; with empty tails this is the exact norm ratio."""
    if p <= 1.0:
        raise ValidationError("the surrogate needs p > 1")
    qg, qa = exponents(p)
    num = np.logaddexp(_log_power_sum(g.sigma, qg), log_tail_mass(g.tail, qg))
    den = np.logaddexp(_log_power_sum(a.sigma, qa), log_tail_mass(a.tail, qa))
    if not np.isfinite(num) or not np.isfinite(den):
        raise NumericError("surrogate is undefined for a zero spectrum")
    return float(p / (p + 1.0) * num - (p - 1.0) / (2.0 * (p + 1.0)) * den)


def surrogate(p: float, g: SpectrumSketch, a: SpectrumSketch) -> float:
    return math.exp(log_surrogate(p, g, a))


def exact_sketch(m) -> SpectrumSketch:
    return SpectrumSketch(singular_values(m), TailBound(0.0, 0.0, 0), True)


def norm_ratio_objective(g, a, p: float) -> float:
    """``||G||_{S_qG}^{qG p/(p+1)} / ||A||_{S_qA}^{qA (p-1)/(2(p+1))}`` on full spectra."""
    return surrogate(p, exact_sketch(g), exact_sketch(a))


class RandomizedResult(NamedTuple):
    pstar: float
    log_objective: float
    g: SpectrumSketch
    a: SpectrumSketch


def maximize_log_space(fun, p_max: float, xatol: float = 1e-3, grid: int = 33) -> tuple[float, float]:
    """Maximize ``fun(p)`` over ``x = ln(p - 1)`` in ``[ln 0.01, ln(p_max - 1)]``.

    A coarse grid locates the best cell; bounded Brent then refines it. Ties go
    to the larger p.
    """
    hi = math.log(p_max - 1.0)
    xs = np.linspace(X_LOW, hi, grid)
    vals = np.array([fun(1.0 + math.exp(x)) for x in xs])
    best = int(np.flatnonzero(vals >= vals.max() - 1e-12 * max(1.0, abs(vals.max())))[-1])
    lo_i, hi_i = max(best - 1, 0), min(best + 1, grid - 1)
    res = minimize_scalar(
        lambda x: -fun(1.0 + math.exp(x)),
        bounds=(xs[lo_i], xs[hi_i]),
        method="bounded",
        options={"xatol": xatol, "maxiter": 100},
    )
    x_best, v_best = xs[best], vals[best]
    if res.success and -res.fun > v_best:
        x_best, v_best = float(res.x), float(-res.fun)
    p = p_max if x_best >= hi else 1.0 + math.exp(x_best)
    return p, float(v_best)


def randomized_pstar(a, g, cfg, rng: np.random.Generator) -> RandomizedResult:
    """Sketch both spectra, then maximize the log surrogate over ``ln(p - 1)``."""
    a = as_matrix(a, "a")
    g = as_matrix(g, "g")
    ga = sketch_spectrum(g, cfg.rank, cfg.power_iters, rng, cfg.sketch, cfg.probes)
    aa = sketch_spectrum(a, cfg.rank, cfg.power_iters, rng, cfg.sketch, cfg.probes)
    pstar, val = maximize_log_space(lambda p: log_surrogate(p, ga, aa), cfg.p_max, cfg.search_tol)
    return RandomizedResult(pstar, val, ga, aa)


def spectral_momentum_update(bar_sigma, fresh_sigma, beta: float) -> np.ndarray:
    old = np.asarray(bar_sigma, dtype=np.float64)
    new = np.asarray(fresh_sigma, dtype=np.float64)
    if old.shape != new.shape:
        raise ValidationError(f"length mismatch: {old.shape} vs {new.shape}")
    if not 0.0 <= beta <= 1.0:
        raise ValidationError("beta must lie in [0, 1]")
    return beta * old + (1.0 - beta) * new
