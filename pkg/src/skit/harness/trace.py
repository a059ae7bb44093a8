"""Replay (M, G, A) snapshots through the selectors and compare p* trajectories."""
from __future__ import annotations

import math
import re
from pathlib import Path

import numpy as np

from ..errors import ValidationError
from ..randomized import SpectrumSketch, exact_sketch, log_surrogate, maximize_log_space, randomized_pstar, spectral_momentum_update
from ..rfr import power_law_activations
from ..selector import EmaStats, PStarConfig, compute_stats, ema_update, select_pstar
from ..synth import with_spectrum
from .common import MissingInputError, derive_rng, pool_map, prepare_out, write_csv, write_jsonl

SELECTORS = ("exact", "randomized", "norm-ratio")
_SNAP = re.compile(r"^(?P<run>.+)-step(?P<step>\d+)-(?P<layer>[^-]+)\.npz$")


def synthetic_snapshots(cfg: dict, run: int) -> list:
    """Momentum of minibatch gradients for a linear layer drifting toward a teacher."""
    sc = cfg["synthetic"]
    rng = derive_rng(cfg["seed"], "trace", run)
    r, c, k = sc["rows"], sc["cols"], sc["samples"]
    pool = power_law_activations(c, 16 * k, sc["activation_decay"], rng)
    teacher = with_spectrum(np.arange(1, min(r, c) + 1) ** -sc["teacher_decay"], r, c, rng)
    w = 0.1 * rng.standard_normal((r, c))
    m = np.zeros((r, c))
    snaps = []
    for t in range(sc["steps"]):
        a = pool[:, rng.choice(pool.shape[1], size=k, replace=False)]
        y = teacher @ a + sc["noise"] * rng.standard_normal((r, k))
        g = (w @ a - y) @ a.T / k
        m = 0.9 * m + 0.1 * g
        snaps.append((t, m.copy(), g, a))
        w = w - sc["drift"] * m
    return snaps


def load_run_snapshots(run_dir) -> dict:
    """``{(run, layer): [(step, M, G, A), ...]}`` from a train run's snapshot folder."""
    folder = Path(run_dir) / "snapshots" if run_dir is not None else None
    files = sorted(folder.glob("*.npz")) if folder is not None and folder.is_dir() else []
    if not files:
        raise MissingInputError(f"no snapshots found under {folder}")
    groups: dict = {}
    for f in files:
        mt = _SNAP.match(f.name)
        if mt is None:
            continue
        with np.load(f) as z:
            item = (int(mt["step"]), z["m"], z["g"], z["a"])
        groups.setdefault((mt["run"], mt["layer"]), []).append(item)
    if not groups:
        raise MissingInputError(f"no well-formed snapshots under {folder}")
    return {k: sorted(v, key=lambda s: s[0]) for k, v in groups.items()}


def _sketch_trace(snaps, beta, p_max, sketcher):
    out, bar = [], None
    for _, _, g, a in snaps:
        sg, sa = sketcher(g, a)
        if bar is not None and bar[0].shape == sg.sigma.shape and bar[1].shape == sa.sigma.shape:
            sig_g = spectral_momentum_update(bar[0], sg.sigma, beta)
            sig_a = spectral_momentum_update(bar[1], sa.sigma, beta)
        else:
            sig_g, sig_a = sg.sigma, sa.sigma
        bar = (sig_g, sig_a)
        gs, as_ = SpectrumSketch(sig_g, sg.tail, sg.exact), SpectrumSketch(sig_a, sa.tail, sa.exact)
        p, _ = maximize_log_space(lambda q: log_surrogate(q, gs, as_), p_max)
        out.append(p)
    return out


def trace(snaps, selector: str, beta: float, cfg: dict, seed_tag) -> list:
    """p* after each snapshot; the initial p_max is prepended."""
    pc = PStarConfig(p_min=cfg["p_min"], p_max=cfg["p_max"], beta_p=beta)
    if selector == "exact":
        ema, prev, out = EmaStats(beta), pc.p_max, []
        for _, m, g, a in snaps:
            ema = ema_update(ema, compute_stats(m, g, a))
            prev = select_pstar(ema.stats, pc, prev).pstar
            out.append(prev)
    elif selector == "norm-ratio":
        out = _sketch_trace(snaps, beta, pc.p_max, lambda g, a: (exact_sketch(g), exact_sketch(a)))
    elif selector == "randomized":
        rng = derive_rng(cfg["seed"], "randomized", *seed_tag)
        rc = PStarConfig(p_min=cfg["p_min"], p_max=cfg["p_max"], rank=cfg["rank"], power_iters=cfg["power_iters"])

        def sketch(g, a):
            res = randomized_pstar(a, g, rc, rng)
            return res.g, res.a

        out = _sketch_trace(snaps, beta, pc.p_max, sketch)
    else:
        raise ValidationError(f"unknown selector {selector!r}")
    return [pc.p_max] + out


def total_variation(seq) -> float:
    return float(np.sum(np.abs(np.diff(np.asarray(seq, dtype=np.float64)))))


def cmd_pstar_trace(cfg: dict) -> Path:
    bad = [s for s in cfg["selectors"] if s not in SELECTORS]
    if bad:
        raise ValidationError(f"unknown selectors {bad}")
    for b in cfg["beta_p"]:
        if not 0 <= b < 1:
            raise ValidationError("beta_p values must lie in [0, 1)")
    if cfg["source"] == "synthetic":
        groups = {(f"synthetic{r}", "w"): synthetic_snapshots(cfg, r) for r in range(cfg["synthetic"]["runs"])}
    elif cfg["source"] == "run":
        groups = load_run_snapshots(cfg["run_dir"])
    else:
        raise ValidationError("source must be 'synthetic' or 'run'")
    out = prepare_out(cfg["out"])
    jobs = [(key, sel, float(b)) for key in sorted(groups) for sel in cfg["selectors"] for b in cfg["beta_p"]]

    def work(job):
        key, sel, b = job
        return trace(groups[key], sel, b, cfg, (*key, sel, b))

    results = pool_map(work, jobs)
    records, summary = [], []
    for (key, sel, b), seq in zip(jobs, results):
        steps = [None] + [s[0] for s in groups[key]]
        for i, (st, p) in enumerate(zip(steps, seq)):
            records.append({"run": key[0], "layer": key[1], "selector": sel, "beta_p": b,
                            "index": i, "step": st, "pstar": p})
        summary.append((key[0], key[1], sel, b, len(seq), total_variation(seq)))
    write_jsonl(out / "pstar_trace.jsonl", records)
    write_csv(out / "trace_summary.csv", ("run", "layer", "selector", "beta_p", "points", "total_variation"), summary)
    return out / "pstar_trace.jsonl"
