"""Random feature regression: a one-layer quadratic loss used as an exact oracle.

``L(W) = ||W A - Y||_F^2 / (2k)`` with ``k`` samples in the columns of ``A``.
"""
from __future__ import annotations

import csv
import math
from typing import NamedTuple

import numpy as np

from .errors import NumericError, ValidationError
from .linalg import as_matrix, singular_values, svd
from .synth import random_orthonormal

P_MIN = 1.02
P_MAX = 50.0


class RfrProblem(NamedTuple):
    w: np.ndarray
    a: np.ndarray
    y: np.ndarray

    @property
    def k(self) -> int:
        return self.a.shape[1]


def make_problem(w, a, y) -> RfrProblem:
    w, a, y = as_matrix(w, "w"), as_matrix(a, "a"), as_matrix(y, "y")
    if w.shape[1] != a.shape[0] or y.shape != (w.shape[0], a.shape[1]):
        raise ValidationError(f"inconsistent shapes w{w.shape} a{a.shape} y{y.shape}")
    return RfrProblem(w, a, y)


def rfr_loss(prob: RfrProblem, w=None) -> float:
    w = prob.w if w is None else w
    r = w @ prob.a - prob.y
    return float(np.sum(r * r)) / (2.0 * prob.k)


def rfr_gradient(prob: RfrProblem) -> np.ndarray:
    return (prob.w @ prob.a - prob.y) @ prob.a.T / prob.k


def exact_decrease(prob: RfrProblem, dw) -> float:
    """``<G, dW> + ||dW A||^2 / (2k)``, equal to ``L(W + dW) - L(W)``."""
    dw = as_matrix(dw, "dw")
    if dw.shape != prob.w.shape:
        raise ValidationError("dw must match w in shape")
    da = dw @ prob.a
    return float(np.sum(rfr_gradient(prob) * dw)) + float(np.sum(da * da)) / (2.0 * prob.k)


def fractional_direction(m, p: float) -> np.ndarray:
    res = svd(m)
    inv = 0.0 if math.isinf(p) else 1.0 / p
    w = np.where(res.sigma > 0, res.sigma**inv, 0.0)
    return (res.u * w) @ res.vt


class OracleRow(NamedTuple):
    p: float
    eta_star_closed: float
    eta_star_grid: float
    decrease: float  # most negative loss change found on the eta grid
    eta_cell: float  # log spacing of the fine eta grid around the vertex


def _closed_eta(prob: RfrProblem, g: np.ndarray, y: np.ndarray) -> float:
    num = float(np.sum(g * y))
    ya = y @ prob.a
    den = float(np.sum(ya * ya))
    if den == 0.0:
        raise NumericError("direction has no curvature")
    return prob.k * num / den


def _grid_losses(prob, r0, ya, etas):
    resid = r0[None] - etas[:, None, None] * ya[None]
    return np.einsum("eij,eij->e", resid, resid) / (2.0 * prob.k)


def brute_force_pstar(
    prob: RfrProblem,
    m,
    grid_size: int = 512,
    eta_points: int = 256,
    p_min: float = P_MIN,
    p_max: float = P_MAX,
) -> tuple[float, list[OracleRow]]:
    """Brute-force p* by true loss evaluation on a p grid and nested eta grids.

    For each p the step ``-eta U diag(sigma)^(1/p) V^T`` is scanned on a coarse
    log grid over ``[1e-8, 1]`` times the Cauchy-Schwarz bound
    ``k ||G|| ||Y|| / ||Y A||^2``, then on a fine grid spanning the two coarse
    cells around the best vertex. Only the sign of the step is taken from
    ``<G, Y>``. Ties go to the larger p.
    """
    m = as_matrix(m, "momentum")
    if grid_size < 64 or eta_points < 16:
        raise ValidationError("grid_size must be >= 64 and eta_points >= 16")
    res = svd(m)
    if res.rank == 0:
        raise NumericError("momentum is zero")
    g = rfr_gradient(prob)
    base = rfr_loss(prob)
    r0 = prob.w @ prob.a - prob.y
    gnorm = float(np.linalg.norm(g))
    ps = np.geomspace(p_min, p_max, grid_size)
    rel = np.geomspace(1e-8, 1.0, eta_points)
    rows = []
    for p in ps:
        y = (res.u * np.where(res.sigma > 0, res.sigma ** (1.0 / p), 0.0)) @ res.vt
        eta_c = _closed_eta(prob, g, y)
        ya = y @ prob.a
        bound = prob.k * gnorm * float(np.linalg.norm(y)) / float(np.sum(ya * ya))
        sign = -1.0 if np.sum(g * y) < 0 else 1.0
        coarse = sign * bound * rel
        j = int(np.argmin(_grid_losses(prob, r0, ya, coarse)))
        lo, hi = coarse[max(j - 1, 0)], coarse[min(j + 1, eta_points - 1)]
        fine = sign * np.geomspace(abs(lo), abs(hi), eta_points)
        losses = _grid_losses(prob, r0, ya, fine)
        i = int(np.argmin(losses))
        cell = math.log(abs(fine[1] / fine[0]))
        rows.append(OracleRow(float(p), eta_c, float(fine[i]), float(losses[i] - base), cell))
    dec = np.array([r.decrease for r in rows])
    best = float(dec.min())
    tie = dec <= best + 1e-12 * max(abs(best), 1e-300)
    return rows[int(np.flatnonzero(tie)[-1])].p, rows


def write_oracle_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(OracleRow._fields)
        for r in rows:
            out.writerow([f"{v:.17g}" for v in r])


class Criterion(NamedTuple):
    favor_spectral: bool
    lhs: float  # ||G||_*^2 / ||G||_F^2
    rhs: float  # ||A||_F^2 / ||A||_2^2


def spectral_vs_euclidean_criterion(g, a) -> Criterion:
    sg = singular_values(g)
    sa = singular_values(a)
    if sg[0] == 0.0 or sa[0] == 0.0:
        raise NumericError("criterion needs nonzero g and a")
    lhs = float(np.sum(sg) ** 2 / np.sum(sg * sg))
    rhs = float(np.sum(sa * sa) / sa[0] ** 2)
    return Criterion(lhs > rhs, lhs, rhs)


def power_law_activations(n: int, k: int, decay: float, rng: np.random.Generator) -> np.ndarray:
    """``n x k`` activations with singular values ``i**(-decay)``."""
    r = min(n, k)
    sigma = np.arange(1, r + 1, dtype=np.float64) ** (-decay)
    return (random_orthonormal(n, r, rng) * sigma) @ random_orthonormal(k, r, rng).T


def random_instance(
    rng: np.random.Generator,
    m: int = 12,
    n: int = 10,
    k: int = 24,
    decay: float = 1.0,
    noise: float = 0.1,
    momentum_noise: float = 0.5,
) -> tuple[RfrProblem, np.ndarray]:
    """Teacher-student instance plus a momentum that only partly aligns with G.

    Returns ``(problem, momentum)``; the momentum is the gradient blended with
    an independent random matrix of relative size ``momentum_noise``.
    """
    a = power_law_activations(n, k, decay, rng) * math.sqrt(k)
    teacher = rng.standard_normal((m, n))
    y = teacher @ a + noise * rng.standard_normal((m, k))
    w = rng.standard_normal((m, n)) * 0.5
    prob = RfrProblem(w, a, y)
    g = rfr_gradient(prob)
    pert = rng.standard_normal((m, n))
    pert *= np.linalg.norm(g) / max(np.linalg.norm(pert), 1e-300)
    return prob, g + momentum_noise * pert
