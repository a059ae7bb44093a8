"""Seeded synthetic matrices with planted spectra."""
from __future__ import annotations

import numpy as np

from .errors import ValidationError


def random_orthonormal(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((rows, cols)))
    return q * np.where(np.diag(r) < 0, -1.0, 1.0)


def with_spectrum(sigma, rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=np.float64)
    k = sigma.size
    if k > min(rows, cols):
        raise ValidationError("spectrum longer than min(rows, cols)")
    u = random_orthonormal(rows, k, rng)
    v = random_orthonormal(cols, k, rng)
    return (u * sigma) @ v.T


def heavy_tailed_matrix(rows: int, cols: int, cond: float, rng: np.random.Generator, df: float = 3.0):
    """Student-t matrix whose spectrum is remapped log-affinely to condition number ``cond``.

    Singular vectors come from the heavy-tailed draw; singular values keep
    their relative log-spacing but span exactly ``[sigma_1 / cond, sigma_1]``.
    """
    if cond < 1:
        raise ValidationError("cond must be >= 1")
    x = rng.standard_t(df, size=(rows, cols))
    u, s, vt = np.linalg.svd(x, full_matrices=False)
    logs = np.log(s)
    span = logs[0] - logs[-1]
    t = (logs - logs[-1]) / span if span > 0 else np.ones_like(logs)
    s_new = s[0] * np.exp((t - 1.0) * np.log(cond))
    return (u * s_new) @ vt


def log_uniform(lo: float, hi: float, rng: np.random.Generator) -> float:
    return float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
