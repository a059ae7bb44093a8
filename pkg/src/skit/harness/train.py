"""Training loop for the TinyMlp: matrices via the Schatten optimizer, vectors via Adam."""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import NumericError, ValidationError
from ..fractional import FractionalMapPlan
from ..optimizer import VARIANTS, OptimizerConfig, SchattenOptimizer
from ..selector import PStarConfig
from .common import derive_rng, jsonl_line, pool_map, prepare_out, write_csv
from .data import make_dataset
from .mlp import MATRICES, VECTORS, TinyMlp


class TrainingDiverged(NumericError):
    def __init__(self, message: str, dump_path: str | None):
        super().__init__(message)
        self.dump_path = dump_path


def optimizer_config(cfg: dict, variant: str, seed: int, **extra) -> OptimizerConfig:
    """Build (and thereby validate) the optimizer for one variant of a train config."""
    if variant not in VARIANTS:
        raise ValidationError(f"variant {variant!r} is not in the roster {VARIANTS}")
    opt = dict(cfg["optimizer"])
    opt.update(cfg.get("variant_overrides", {}).get(variant, {}))
    pstar = dict(cfg["pstar"])
    for key in list(opt):
        if key.startswith("pstar."):
            pstar[key[6:]] = opt.pop(key)
    pstar.update(extra.pop("pstar", {}))
    opt.update(extra)
    return OptimizerConfig(
        variant=variant,
        pstar_cfg=PStarConfig(**pstar),
        plan=FractionalMapPlan(p_max=pstar["p_max"], **cfg["plan"]),
        seed=seed,
        **opt,
    )


class VectorAdam:
    def __init__(self, lr, beta1, beta2, eps):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m, self.v, self.t = {}, {}, 0

    def step(self, params: dict, grads: dict) -> dict:
        self.t += 1
        out = {}
        for k, w in params.items():
            g = grads[k]
            m = self.m.get(k, np.zeros_like(g))
            v = self.v.get(k, np.zeros_like(g))
            m = self.b1 * m + (1 - self.b1) * g
            v = self.b2 * v + (1 - self.b2) * g * g
            self.m[k], self.v[k] = m, v
            mh = m / (1 - self.b1**self.t)
            vh = v / (1 - self.b2**self.t)
            out[k] = w - self.lr * mh / (np.sqrt(vh) + self.eps)
        return out


@dataclass
class RunResult:
    variant: str
    seed: int
    losses: np.ndarray
    smoothed: np.ndarray
    records: list = field(default_factory=list)
    selections: list = field(default_factory=list)  # one record per selector call
    seconds: float = 0.0

    @property
    def final_loss(self) -> float:
        return float(self.losses[-1])

    @property
    def final_smoothed(self) -> float:
        return float(self.smoothed[-1])


def smooth(losses, beta: float) -> np.ndarray:
    """Bias-corrected exponential moving average."""
    out = np.empty(len(losses))
    acc = 0.0
    for i, v in enumerate(losses):
        acc = beta * acc + (1 - beta) * v
        out[i] = acc / (1 - beta ** (i + 1))
    return out


def _dump(out_dir, variant, seed, step, loss, params, grads, reports) -> str | None:
    if out_dir is None:
        return None
    path = Path(out_dir) / f"diverged-{variant}-seed{seed}-step{step}.json"
    stats = {
        k: {
            "param_norm": float(np.linalg.norm(params[k])),
            "grad_norm": float(np.linalg.norm(grads[k])),
            "param_finite": bool(np.all(np.isfinite(params[k]))),
        }
        for k in params
    }
    payload = {"variant": variant, "seed": seed, "step": step, "loss": loss, "layers": stats,
               "last_reports": [json.loads(r.to_json()) for r in reports]}
    path.write_text(jsonl_line(payload) + "\n")
    return str(path)


def train_run(cfg: dict, variant: str, seed: int, steps: int | None = None, out_dir=None,
              snapshot_dir=None, opt_extra: dict | None = None) -> RunResult:
    """One seeded run. The dataset and initialization depend on the seed only."""
    steps = cfg["steps"] if steps is None else steps
    ocfg = optimizer_config(cfg, variant, seed, **(opt_extra or {}))
    data = make_dataset(dict(cfg["data"], hidden=cfg["hidden"]), derive_rng(seed, "data"))
    d_in = data.x.shape[0]
    n_out = data.classes if data.task == "mixture" else data.y.shape[0]
    task = "classification" if data.task == "mixture" else "regression"
    model = TinyMlp(d_in, cfg["hidden"], n_out, derive_rng(seed, "init"))
    batch_rng = derive_rng(seed, "batch")
    mats = {k: model.params[k] for k in MATRICES}
    vecs = {k: model.params[k] for k in VECTORS}
    opt = SchattenOptimizer(mats, ocfg)
    va = VectorAdam(**cfg["vector_adam"])
    n = data.x.shape[1]
    batch = min(cfg["batch"], n)
    losses = np.empty(steps)
    records, selections, reports = [], [], []
    t0 = time.perf_counter()
    for step in range(steps):
        idx = batch_rng.choice(n, size=batch, replace=False)
        x = data.x[:, idx]
        y = data.y[idx] if task == "classification" else data.y[:, idx]
        params = {**mats, **vecs}
        loss, grads, fw = model.loss_and_grads(x, y, task, params)
        if not math.isfinite(loss):
            dump = _dump(out_dir, variant, seed, step, loss, params, grads, reports)
            raise TrainingDiverged(f"{variant} seed {seed}: non-finite loss at step {step}", dump)
        losses[step] = loss
        acts = {k: fw.inputs[k] for k in MATRICES} if opt.needs_activations() else None
        mats, reports = opt.step(mats, {k: grads[k] for k in MATRICES}, acts)
        vecs = va.step(vecs, {k: grads[k] for k in VECTORS})
        rec = {"variant": variant, "seed": seed, "step": step, "loss": loss,
               "pstar": {r.param: r.pstar for r in reports}}
        refreshed = [r for r in reports if r.refreshed]
        if refreshed:
            rec["eta_star"] = {r.param: r.eta_star for r in refreshed}
            rec["fallback"] = {r.param: r.fallback for r in refreshed}
            selections.extend(
                {"variant": variant, "seed": seed, "step": step, "param": r.param, "pstar": r.pstar,
                 "eta_star": r.eta_star, "objective_at_pstar": r.objective, "fallback": r.fallback}
                for r in refreshed
            )
            if snapshot_dir is not None:
                for r in refreshed:
                    np.savez(
                        Path(snapshot_dir) / f"{variant}-seed{seed}-step{step:06d}-{r.param}.npz",
                        m=opt.states[r.param].momentum, g=grads[r.param], a=fw.inputs[r.param],
                    )
        records.append(rec)
    seconds = time.perf_counter() - t0
    return RunResult(variant, seed, losses, smooth(losses, cfg["smoothing"]), records, selections, seconds)


SUMMARY_HEADER = ("variant", "seeds", "final_loss_mean", "final_loss_std", "final_smoothed_mean", "final_smoothed_std")


def _mean_std(vals) -> tuple[float, float]:
    arr = np.asarray(vals, dtype=np.float64)
    return float(arr.mean()), float(arr.std(ddof=1)) if arr.size > 1 else 0.0


def summarize(results: list) -> list:
    rows = []
    for variant in dict.fromkeys(r.variant for r in results):
        rs = [r for r in results if r.variant == variant]
        rows.append((variant, len(rs), *_mean_std([r.final_loss for r in rs]),
                     *_mean_std([r.final_smoothed for r in rs])))
    return rows


def ablation_table(cfg: dict) -> tuple[list, list]:
    """Final smoothed loss for every (beta_p, interval) cell; rows are beta_p values."""
    ab = cfg["ablation"]
    seeds = [cfg["seed"] + i for i in range(ab["seeds"])]
    cells = [(b, iv, s) for b in ab["beta_p"] for iv in ab["intervals"] for s in seeds]

    def run(cell):
        b, iv, s = cell
        extra = {"pstar": {"beta_p": float(b), "update_interval": int(iv)}}
        return train_run(cfg, ab["variant"], s, steps=ab["steps"], opt_extra=extra).final_smoothed

    finals = dict(zip(cells, pool_map(run, cells)))
    header = ["beta_p"] + [f"interval_{iv}" for iv in ab["intervals"]]
    rows = [[float(b)] + [float(np.mean([finals[(b, iv, s)] for s in seeds])) for iv in ab["intervals"]]
            for b in ab["beta_p"]]
    return header, rows


def measure_overhead(cfg: dict) -> dict:
    """Wall-clock of the adaptive run against the same optimizer with p frozen at p_max."""
    ov = cfg["overhead"]
    p_max = float(cfg["pstar"]["p_max"])
    adaptive, frozen = [], []
    for _ in range(ov["repetitions"]):
        adaptive.append(train_run(cfg, ov["variant"], cfg["seed"]).seconds)
        frozen.append(train_run(cfg, ov["variant"], cfg["seed"], opt_extra={"frozen_p": p_max}).seconds)
    ta, tf = float(np.median(adaptive)), float(np.median(frozen))
    return {"variant": ov["variant"], "steps": cfg["steps"], "update_interval": cfg["pstar"]["update_interval"],
            "adaptive_seconds": ta, "frozen_seconds": tf, "overhead": ta / tf - 1.0}


def cmd_train(cfg: dict) -> Path:
    seeds = [cfg["seed"] + i for i in range(cfg["seeds"])]
    for v in cfg["variants"]:  # validate every variant before any work
        optimizer_config(cfg, v, seeds[0])
    unknown = set(cfg["variant_overrides"]) - set(cfg["variants"]) - set(VARIANTS)
    if unknown:
        raise ValidationError(f"variant_overrides names unknown variants {sorted(unknown)}")
    out = prepare_out(cfg["out"])
    snap_dir = None
    if cfg["snapshots"]:
        snap_dir = out / "snapshots"
        snap_dir.mkdir(exist_ok=True)
    jobs = [(v, s) for v in cfg["variants"] for s in seeds]
    started = time.time()
    results = pool_map(lambda j: train_run(cfg, j[0], j[1], out_dir=out, snapshot_dir=snap_dir), jobs)
    with open(out / "steps.jsonl", "w") as fh:
        for r in results:
            for rec in r.records:
                fh.write(jsonl_line(rec) + "\n")
    with open(out / "pstar.jsonl", "w") as fh:
        for r in results:
            for rec in r.selections:
                fh.write(jsonl_line(rec) + "\n")
    write_csv(out / "summary.csv", SUMMARY_HEADER, summarize(results))
    meta = {"started_unix": started, "runs": [{"variant": r.variant, "seed": r.seed, "seconds": r.seconds} for r in results]}
    if cfg["ablation"]["enabled"]:
        header, rows = ablation_table(cfg)
        write_csv(out / "ablation.csv", header, rows)
    if cfg["overhead"]["enabled"]:
        meta["overhead"] = measure_overhead(cfg)
    (out / "metadata.json").write_text(json.dumps(meta, indent=2) + "\n")
    return out
