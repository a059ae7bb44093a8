"""Dense real linear algebra used by every other module.

Matrices are plain 2-D ``float64`` numpy arrays. ``as_matrix`` is the single
validation gate; everything downstream assumes its guarantees.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from ._accel import resolve_backend
from .errors import ConvergenceError, ValidationError
from .kernels import jacobi_sweeps

JACOBI_TOL = 1e-13
JACOBI_MAX_SWEEPS = 60
RANK_RTOL = 1e-14


def as_matrix(m, name="matrix") -> np.ndarray:
    """Return ``m`` as a finite 2-D float64 array or raise ValidationError."""
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValidationError(f"{name} must have positive dimensions, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains NaN or Inf")
    return arr


def make_rng(seed: int) -> np.random.Generator:
    """Seeded generator; the sample stream is a pure function of ``seed``."""
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))


class SvdResult(NamedTuple):
    u: np.ndarray  # m x k, orthonormal columns
    sigma: np.ndarray  # k, descending
    vt: np.ndarray  # k x n, orthonormal rows
    sweeps: int = 0

    @property
    def rank(self) -> int:
        return int(np.count_nonzero(self.sigma))

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.sigma) @ self.vt


def _complete(basis: np.ndarray, k: int) -> np.ndarray:
    """Extend orthonormal columns ``basis`` (m x r) to m x k orthonormal columns."""
    m, r = basis.shape
    if r >= k:
        return basis[:, :k]
    q, _ = np.linalg.qr(np.hstack([basis, np.eye(m)]))
    q = q[:, :k].copy()
    q[:, :r] = basis
    return q


def _sign_fix(u: np.ndarray, vt: np.ndarray, r: int) -> None:
    # largest-magnitude entry of each left vector is made positive
    for j in range(r):
        i = int(np.argmax(np.abs(u[:, j])))
        if u[i, j] < 0:
            u[:, j] *= -1.0
            vt[j] *= -1.0


def svd(m, backend: str | None = None) -> SvdResult:
    """Thin SVD by one-sided Jacobi.

    Singular values below ``RANK_RTOL * sigma_1`` are clamped to zero and the
    matching singular vectors are completed to an orthonormal set.
    """
    a = as_matrix(m)
    rows, cols = a.shape
    if rows < cols:
        res = svd(a.T, backend=backend)
        return SvdResult(res.vt.T.copy(), res.sigma, res.u.T.copy(), res.sweeps)

    backend = resolve_backend(backend)
    work = np.array(a.T, order="C", copy=True)
    vwork = np.eye(cols)
    sweeps, work, vwork = jacobi_sweeps(work, vwork, JACOBI_TOL, JACOBI_MAX_SWEEPS, backend)
    if sweeps < 0:
        raise ConvergenceError(
            f"Jacobi SVD did not converge in {JACOBI_MAX_SWEEPS} sweeps for a {rows}x{cols} matrix"
        )

    norms = np.sqrt(np.einsum("ij,ij->i", work, work))
    order = np.argsort(-norms, kind="stable")
    sigma = norms[order]
    work = work[order]
    v = vwork[order].T
    top = sigma[0] if sigma.size else 0.0
    keep = sigma > RANK_RTOL * top if top > 0 else np.zeros_like(sigma, dtype=bool)
    r = int(keep.sum())
    sigma = np.where(keep, sigma, 0.0)

    u_r = (work[:r] / sigma[:r, None]).T
    u = _complete(u_r, cols)
    # V from Jacobi is orthogonal to rounding already
    vt = np.ascontiguousarray(v.T)
    _sign_fix(u, vt, r)
    return SvdResult(u, sigma, vt, sweeps)


def singular_values(m, backend: str | None = None) -> np.ndarray:
    return svd(m, backend=backend).sigma


class OrthoResult(NamedTuple):
    q: np.ndarray
    rank: int
    deficient: bool


def orthonormalize(m, rtol: float = 1e-12) -> OrthoResult:
    """Orthonormal basis for the column span of a tall matrix.

    Columns past the numerical rank are filled with arbitrary orthonormal
    directions; ``deficient`` reports that this happened.
    """
    a = as_matrix(m)
    rows, cols = a.shape
    if rows < cols:
        raise ValidationError(f"orthonormalize needs rows >= cols, got {rows}x{cols}")
    q, r = np.linalg.qr(a)
    d = np.diag(r).copy()
    signs = np.where(d < 0, -1.0, 1.0)
    q = q * signs
    d = np.abs(d)
    scale = max(float(np.abs(r).max()), 1e-300)
    rank = int(np.count_nonzero(d > rtol * scale))
    return OrthoResult(q, rank, rank < cols)


def frobenius(m) -> float:
    return float(np.linalg.norm(as_matrix(m)))


def spectral_norm_upper_bound(m, variant: str = "schatten-4") -> float:
    """Cheap upper bound on the spectral norm.

    ``schatten-2`` is the Frobenius norm; ``schatten-4`` is
    ``||M^T M||_F ** 0.5`` using whichever Gram matrix is smaller.
    """
    a = as_matrix(m)
    if variant == "schatten-2":
        return float(np.linalg.norm(a))
    if variant == "schatten-4":
        gram = a.T @ a if a.shape[1] <= a.shape[0] else a @ a.T
        return float(np.sqrt(np.linalg.norm(gram)))
    raise ValidationError(f"unknown norm variant {variant!r}")


def power_iteration_norm(m, iters: int, rng: np.random.Generator) -> float:
    """Rayleigh-quotient estimate of sigma_1; never exceeds the true value."""
    a = as_matrix(m)
    if iters < 1:
        raise ValidationError("iters must be >= 1")
    x = rng.standard_normal(a.shape[1])
    nx = np.linalg.norm(x)
    if nx == 0.0:
        return 0.0
    x /= nx
    est = 0.0
    for _ in range(iters):
        y = a @ x
        est = float(np.linalg.norm(y))
        z = a.T @ y
        nz = np.linalg.norm(z)
        if nz == 0.0:
            return est
        x = z / nz
    return float(np.linalg.norm(a @ x))


def gaussian_matrix(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    if rows < 1 or cols < 1:
        raise ValidationError("gaussian_matrix needs positive dimensions")
    return rng.standard_normal((rows, cols))


def schatten_norm(sigma: np.ndarray, p: float) -> float:
    """l_p norm of a singular-value vector, overflow-safe for large ``p``."""
    s = np.asarray(sigma, dtype=np.float64)
    top = float(s.max(initial=0.0))
    if top == 0.0:
        return 0.0
    if np.isinf(p):
        return top
    return top * float(np.sum((s / top) ** p)) ** (1.0 / p)
