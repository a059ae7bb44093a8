"""Error-vs-runtime benchmark of the fractional-map routes."""
from __future__ import annotations

import math
import statistics
import time
from pathlib import Path

import numpy as np

from ..errors import NumericError, ValidationError
from ..fractional import METHODS, FractionalMapPlan, adaptive_order, fractional_map
from ..minimax import fit_remez_schedule
from ..synth import heavy_tailed_matrix, log_uniform
from .common import derive_rng, pool_map, prepare_out, write_csv

HEADER = ("method", "p", "budget", "trial", "rel_err", "seconds")


def oracle(g: np.ndarray, p: float) -> np.ndarray:
    """LAPACK reference, independent of the package's Jacobi SVD."""
    u, s, vt = np.linalg.svd(g, full_matrices=False)
    return (u * s ** (1.0 / p)) @ vt


def timed(fn, repetitions: int, warmups: int):
    for _ in range(warmups):
        fn()
    times = []
    out = None
    for _ in range(repetitions):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return out, statistics.median(times)


def _validate(cfg: dict) -> None:
    bad = [m for m in cfg["methods"] if m not in METHODS]
    if bad:
        raise ValidationError(f"unknown methods {bad}")
    if any(int(b) < 1 or int(b) > 10 for b in cfg["budgets"]):
        raise ValidationError("budgets must lie in [1, 10]")
    if any(float(p) < 1 for p in cfg["p_values"]):
        raise ValidationError("p values must be >= 1")
    lo, hi = cfg["cond_range"]
    if not 1 <= lo <= hi:
        raise ValidationError("cond_range must satisfy 1 <= lo <= hi")
    if cfg["trials"] < 1 or cfg["size"] < 2 or cfg["repetitions"] < 1 or cfg["warmups"] < 0:
        raise ValidationError("trials, size and repetitions must be positive")


def trial_matrix(cfg: dict, trial: int) -> np.ndarray:
    rng = derive_rng(cfg["seed"], "bench", trial)
    cond = log_uniform(*cfg["cond_range"], rng)
    n = cfg["size"]
    return heavy_tailed_matrix(n, n, cond, rng)


def _runner(method: str, p: float, budget: int):
    if method == "remez":
        fit_remez_schedule(p, budget)  # fit outside the timed region; raises if infeasible
    plan = FractionalMapPlan(method=method, p=p, ns_budget=budget)
    if method == "taylor":
        adaptive_order(p)
    return lambda g: fractional_map(g, plan)


def run_trial(cfg: dict, trial: int) -> list:
    g = trial_matrix(cfg, trial)
    rows = []
    for p in map(float, cfg["p_values"]):
        ref = oracle(g, p)
        rnorm = float(np.linalg.norm(ref))
        for method in cfg["methods"]:
            cached = None
            for budget in map(int, cfg["budgets"]):
                if method == "svd" and cached is not None:
                    rows.append(("svd", p, budget, trial, *cached))
                    continue
                try:
                    fn = _runner(method, p, budget)
                except NumericError:
                    rows.append((method, p, budget, trial, math.nan, math.nan))
                    continue
                out, secs = timed(lambda: fn(g), cfg["repetitions"], cfg["warmups"])
                err = float(np.linalg.norm(out - ref)) / rnorm
                if method == "svd":
                    cached = (err, secs)  # svd has no budget knob; one measurement serves every row
                rows.append((method, p, budget, trial, err, secs))
    return rows


def cmd_bench_fractional(cfg: dict) -> Path:
    _validate(cfg)
    out = prepare_out(cfg["out"])
    per_trial = pool_map(lambda t: run_trial(cfg, t), range(cfg["trials"]), timing=True)
    rows = [r for block in per_trial for r in block]
    path = out / "bench_fractional.csv"
    write_csv(path, HEADER, rows)
    return path
