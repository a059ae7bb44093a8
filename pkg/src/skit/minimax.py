"""Odd-quintic minimax fits and the iteration schedules built from them.

Two schedule families share the same solver:

* polar schedules map ``[eps, 1]`` onto 1 (Newton-Schulz orthogonalization);
* fractional schedules split ``x -> x**(1/p)`` into T pinned steps
  ``x -> x**q`` with ``q = p**(-1/T)``.

The per-step problem ``min max |a x + b x^3 + c x^5 - f(x)|`` over a
Chebyshev-Lobatto discretization is solved exactly as a linear program in
epigraph form.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import linprog

from .errors import NumericError, ValidationError

N_NODES = 257
STOCK_MUON_COEFFS = (3.4445, -4.7750, 2.0315)
# classical quintic Newton-Schulz: p(1) = 1, p'(1) = p''(1) = 0
CLASSICAL_NS_COEFFS = (15 / 8, -10 / 8, 3 / 8)
INFEASIBLE_RESIDUAL = 0.5


def chebyshev_nodes(lo: float, hi: float, n: int = N_NODES) -> np.ndarray:
    j = np.arange(n)
    x = 0.5 * (lo + hi) - 0.5 * (hi - lo) * np.cos(np.pi * j / (n - 1))
    x[0], x[-1] = lo, hi
    return x


def quintic(coeffs, x):
    a, b, c = coeffs
    x2 = x * x
    return x * (a + x2 * (b + c * x2))


def quintic_range(coeffs, lo: float, hi: float) -> tuple[float, float]:
    """Exact image of ``[lo, hi]`` under the odd quintic (endpoints + critical points)."""
    a, b, c = coeffs
    pts = [lo, hi]
    # p'(x) = a + 3b x^2 + 5c x^4, a quadratic in x^2
    roots = np.roots([5 * c, 3 * b, a]) if c != 0 else (np.roots([3 * b, a]) if b != 0 else [])
    for r in np.atleast_1d(roots):
        if abs(r.imag) < 1e-14 and r.real > 0:
            x = float(np.sqrt(r.real))
            if lo < x < hi:
                pts.append(x)
    vals = quintic(coeffs, np.array(pts))
    return float(vals.min()), float(vals.max())


def fit_odd_quintic(lo, hi, target, pinned=False, n_nodes=N_NODES):
    """Minimax fit on Chebyshev nodes; returns ``(coeffs, residual)``.

    With ``pinned`` the fit is parametrized as ``x + b(x^3 - x) + c(x^5 - x)``
    so ``a + b + c = 1`` holds exactly rather than to solver tolerance.
    """
    if not 0 <= lo < hi:
        raise ValidationError(f"bad fitting interval [{lo}, {hi}]")
    x = chebyshev_nodes(lo, hi, n_nodes)
    f = target(x)
    if pinned:
        basis = np.stack([x**3 - x, x**5 - x], axis=1)
        rhs = f - x
    else:
        basis = np.stack([x, x**3, x**5], axis=1)
        rhs = f
    nv = basis.shape[1]
    ones = np.ones((len(x), 1))
    a_ub = np.vstack([np.hstack([basis, -ones]), np.hstack([-basis, -ones])])
    b_ub = np.concatenate([rhs, -rhs])
    cost = np.zeros(nv + 1)
    cost[-1] = 1.0
    res = linprog(cost, A_ub=a_ub, b_ub=b_ub, bounds=[(None, None)] * nv + [(0, None)], method="highs")
    if not res.success:
        raise NumericError(f"minimax LP failed on [{lo}, {hi}]: {res.message}")
    sol = res.x[:nv]
    if pinned:
        b, c = sol
        coeffs = (1.0 - b - c, float(b), float(c))
    else:
        coeffs = tuple(float(v) for v in sol)
    resid = float(np.max(np.abs(quintic(coeffs, x) - f)))
    return coeffs, resid


@dataclass
class CoefficientSchedule:
    p: float
    T: int
    eps0: float
    coeffs: list = field(default_factory=list)
    domains: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    kind: str = "fractional"

    def to_json(self) -> str:
        return json.dumps(
            {
                "p": self.p,
                "T": self.T,
                "eps0": self.eps0,
                "coeffs": [list(c) for c in self.coeffs],
                "domains": [list(d) for d in self.domains],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "CoefficientSchedule":
        d = json.loads(text)
        return cls(
            p=float(d["p"]),
            T=int(d["T"]),
            eps0=float(d["eps0"]),
            coeffs=[tuple(c) for c in d["coeffs"]],
            domains=[tuple(x) for x in d["domains"]],
        )

    def apply_scalar(self, x):
        y = np.asarray(x, dtype=np.float64)
        for c in self.coeffs:
            y = quintic(c, y)
        return y


@lru_cache(maxsize=256)
def _fractional_schedule(p: float, iters: int, eps0: float) -> CoefficientSchedule:
    q = p ** (-1.0 / iters)
    sched = CoefficientSchedule(p=p, T=iters, eps0=eps0)
    lo, hi = eps0, 1.0
    for t in range(iters):
        if q == 1.0:
            coeffs, resid = (1.0, 0.0, 0.0), 0.0
        else:
            coeffs, resid = fit_odd_quintic(lo, hi, lambda x: x**q, pinned=True)
        if resid > INFEASIBLE_RESIDUAL:
            raise NumericError(
                f"minimax residual {resid:.3g} at step {t} for p={p}, T={iters}; try a larger T"
            )
        sched.coeffs.append(coeffs)
        sched.domains.append((lo, hi))
        sched.residuals.append(resid)
        lo, hi = quintic_range(coeffs, lo, hi)
        lo = max(lo, 1e-300)
    return sched


def fit_remez_schedule(p: float, iters: int, eps0: float = 0.02) -> CoefficientSchedule:
    """Pinned per-step fits of ``x**q``, ``q = p**(-1/iters)``, on shrinking domains."""
    if iters < 1:
        raise ValidationError("iters must be >= 1")
    if not 0 < eps0 < 1:
        raise ValidationError("eps0 must lie in (0, 1)")
    if p < 1:
        raise ValidationError("p must be >= 1")
    s = _fractional_schedule(float(p), int(iters), float(eps0))
    return CoefficientSchedule(s.p, s.T, s.eps0, list(s.coeffs), list(s.domains), list(s.residuals))


@lru_cache(maxsize=64)
def _polar_schedule(eps: float, iters: int) -> tuple:
    out = []
    lo, hi = eps, 1.0
    for _ in range(iters):
        if hi - lo > 1e-6:
            coeffs, _ = fit_odd_quintic(lo, hi, np.ones_like)
        else:
            coeffs = CLASSICAL_NS_COEFFS
        out.append(coeffs)
        lo, hi = quintic_range(coeffs, lo, hi)
    return tuple(out)


def polar_schedule(eps: float = 0.02, iters: int = 5) -> list:
    """Greedy minimax orthogonalization schedule for singular values in ``[eps, 1]``.

    Each step is the best odd quintic for mapping the current interval onto 1;
    once the interval has collapsed the classical quintic takes over.
    """
    if not 0 < eps < 1:
        raise ValidationError("eps must lie in (0, 1)")
    return list(_polar_schedule(float(eps), int(iters)))


def scalar_polar_error(coeffs_seq, eps: float = 0.02, n: int = 4096) -> float:
    """Worst |f(x) - 1| on a log grid over ``[eps, 1]`` for a composed schedule."""
    x = np.geomspace(eps, 1.0, n)
    for c in coeffs_seq:
        x = quintic(c, x)
    return float(np.max(np.abs(x - 1.0)))
