"""Inner loops: one-sided Jacobi sweeps and the O(k) descent-ratio objective.

Each kernel exists twice: a scalar ``@njit`` loop and a vectorized numpy
version. The two Jacobi variants use different pair orderings (cyclic vs.
round-robin), so they agree to rounding, not bit-for-bit.
"""
import math

import numpy as np

from ._accel import njit

# columns below this fraction of ||A||_F are rounding noise in the null space;
# rotating them against each other never meets the relative test
NULL_RTOL = 1e-15

# ---------------------------------------------------------------------------
# one-sided (Hestenes) Jacobi
# ---------------------------------------------------------------------------


@njit
def _jacobi_nb(cols, vcols, tol, max_sweeps):
    # cols: n x m, row i is column i of the working matrix (contiguous)
    # vcols: n x n, row i is column i of V
    n, m = cols.shape
    fro2 = 0.0
    for i in range(n):
        for r in range(m):
            fro2 += cols[i, r] * cols[i, r]
    tiny = NULL_RTOL * NULL_RTOL * fro2
    for sweep in range(max_sweeps):
        rotated = 0
        for i in range(n - 1):
            for j in range(i + 1, n):
                alpha = 0.0
                beta = 0.0
                gamma = 0.0
                for r in range(m):
                    x = cols[i, r]
                    y = cols[j, r]
                    alpha += x * x
                    beta += y * y
                    gamma += x * y
                if gamma == 0.0 or alpha <= tiny or beta <= tiny:
                    continue
                if abs(gamma) <= tol * math.sqrt(alpha * beta):
                    continue
                rotated += 1
                zeta = (beta - alpha) / (2.0 * gamma)
                if zeta >= 0.0:
                    t = 1.0 / (zeta + math.hypot(1.0, zeta))
                else:
                    t = -1.0 / (-zeta + math.hypot(1.0, zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                for r in range(m):
                    x = cols[i, r]
                    y = cols[j, r]
                    cols[i, r] = c * x - s * y
                    cols[j, r] = s * x + c * y
                for r in range(n):
                    x = vcols[i, r]
                    y = vcols[j, r]
                    vcols[i, r] = c * x - s * y
                    vcols[j, r] = s * x + c * y
        if rotated == 0:
            return sweep + 1
    return -1


def _round_robin(n):
    """Disjoint pair sets covering every (i, j) once; n must be even."""
    players = list(range(n))
    rounds = []
    for _ in range(n - 1):
        left = players[: n // 2]
        right = players[n // 2 :][::-1]
        pairs = sorted((min(a, b), max(a, b)) for a, b in zip(left, right))
        rounds.append(np.array(pairs, dtype=np.intp).T)
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def _jacobi_np(cols, vcols, tol, max_sweeps):
    n = cols.shape[0]
    if n == 1:
        return 1, cols, vcols
    pad = n % 2
    if pad:
        cols = np.vstack([cols, np.zeros((1, cols.shape[1]))])
        vcols_work = np.vstack([vcols, np.zeros((1, vcols.shape[1]))])
    else:
        vcols_work = vcols
    rounds = _round_robin(n + pad)
    tiny = NULL_RTOL * NULL_RTOL * float(np.sum(cols * cols))
    result = -1
    for sweep in range(max_sweeps):
        rotated = 0
        for I, J in rounds:
            ci, cj = cols[I], cols[J]
            alpha = np.einsum("ij,ij->i", ci, ci)
            beta = np.einsum("ij,ij->i", cj, cj)
            gamma = np.einsum("ij,ij->i", ci, cj)
            active = (gamma != 0.0) & (alpha > tiny) & (beta > tiny)
            active &= np.abs(gamma) > tol * np.sqrt(alpha * beta)
            if not active.any():
                continue
            rotated += int(active.sum())
            g = np.where(active, gamma, 1.0)
            zeta = (beta - alpha) / (2.0 * g)
            t = np.sign(zeta) / (np.abs(zeta) + np.hypot(1.0, zeta))
            t[zeta == 0.0] = 1.0
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            c = np.where(active, c, 1.0)[:, None]
            s = np.where(active, s, 0.0)[:, None]
            cols[I], cols[J] = c * ci - s * cj, s * ci + c * cj
            vi, vj = vcols_work[I], vcols_work[J]
            vcols_work[I], vcols_work[J] = c * vi - s * vj, s * vi + c * vj
        if rotated == 0:
            result = sweep + 1
            break
    # the padding row is zero and never rotates
    return result, cols[:n], vcols_work[:n]


def jacobi_sweeps(cols, vcols, tol, max_sweeps, backend):
    """Orthogonalize the rows of ``cols`` in place; returns (sweeps, cols, vcols).

    ``sweeps`` is -1 when the cap was hit without convergence.
    """
    if backend == "numba":
        sweeps = _jacobi_nb(cols, vcols, tol, max_sweeps)
        return sweeps, cols, vcols
    return _jacobi_np(cols, vcols, tol, max_sweeps)


# ---------------------------------------------------------------------------
# descent-ratio objective  J(p) = N(p)^2 / D(p)
# ---------------------------------------------------------------------------


@njit
def _nd_nb(sigma, c, b, inv_p):
    num = 0.0
    den = 0.0
    for i in range(sigma.shape[0]):
        s = sigma[i]
        if s > 0.0:
            w = s**inv_p
        else:
            w = 0.0
        num += w * c[i]
        den += w * w * b[i]
    return num, den


def _nd_np(sigma, c, b, inv_p):
    with np.errstate(divide="ignore"):
        w = np.where(sigma > 0.0, sigma**inv_p, 0.0)
    return float(w @ c), float((w * w) @ b)


def numerator_denominator(sigma, c, b, inv_p, backend):
    if backend == "numba":
        return _nd_nb(sigma, c, b, float(inv_p))
    return _nd_np(sigma, c, b, inv_p)
