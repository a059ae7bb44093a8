"""JSON run configuration: per-command defaults, strict keys, dotted overrides."""
from __future__ import annotations

import copy
import json
from pathlib import Path

from ..errors import ValidationError

_OPTIMIZER = {
    "beta1": 0.95,
    "beta2": 0.95,
    "eps": 1e-8,
    "lr_muon": 0.05,
    "lr_adam": 0.01,
    "lr": None,
    "weight_decay": 0.0,
    "alpha_mode": None,
    "frozen_p": None,
    "alpha_exponent_override": None,
}
_PSTAR = {
    "p_min": 1.02,
    "p_max": 50.0,
    "update_interval": 100,
    "beta_p": 0.9,
    "mode": "exact",
    "search_tol": 1e-3,
    "max_iter": 100,
    "rank": 16,
    "power_iters": 4,
    "probes": 5,
    "sketch": "anchored",
}
_PLAN = {
    "method": "taylor",
    "ns_budget": 5,
    "alpha_variant": "schatten-4",
    "order": None,
    "tol": 1e-3,
    "eps": 0.02,
    "polar_eps": 0.005,
    "max_order": 64,
}
_DATA = {
    "task": "mixture",
    "n_train": 8192,
    "input_dim": 32,
    "classes": 10,
    "separation": 3.0,
    "noise": 1.0,
}

DEFAULTS = {
    "bench-fractional": {
        "seed": 0,
        "out": "runs/bench-fractional",
        "trials": 25,
        "size": 256,
        "cond_range": [10.0, 1000.0],
        "methods": ["svd", "taylor", "remez"],
        "budgets": [1, 2, 3, 4, 5, 6],
        "p_values": [2.0, 4.0, 8.0, 16.0],
        "repetitions": 5,
        "warmups": 2,
    },
    "train": {
        "seed": 0,
        "out": "runs/train",
        "seeds": 3,
        "steps": 200,
        "hidden": 256,
        "batch": 512,
        "smoothing": 0.9,
        "variants": ["sgd-momentum", "adam", "muon", "smuon", "smuon-adam"],
        "variant_overrides": {
            "sgd-momentum": {"lr": 0.3},
        },
        "data": _DATA,
        "optimizer": _OPTIMIZER,
        "pstar": _PSTAR,
        "plan": _PLAN,
        "vector_adam": {"lr": 1e-3, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8},
        "snapshots": False,
        "ablation": {
            "enabled": False,
            "variant": "smuon-adam",
            "beta_p": [0.0, 0.5, 0.9],
            "intervals": [50, 150, 300, 600],
            "steps": 1200,
            "seeds": 1,
        },
        "overhead": {"enabled": False, "variant": "smuon-adam", "repetitions": 3},
    },
    "pstar-trace": {
        "seed": 0,
        "out": "runs/pstar-trace",
        "source": "synthetic",
        "run_dir": None,
        "beta_p": [0.0, 0.5, 0.9],
        "selectors": ["exact", "randomized", "norm-ratio"],
        "rank": 8,
        "power_iters": 4,
        "p_min": 1.02,
        "p_max": 50.0,
        "synthetic": {
            "runs": 5,
            "steps": 40,
            "rows": 24,
            "cols": 16,
            "samples": 64,
            "noise": 0.6,
            "drift": 0.02,
            "activation_decay": 0.5,
            "teacher_decay": 0.5,
        },
    },
    "verify": {
        "seed": 0,
        "out": "runs/verify",
        "criteria": list(range(1, 13)),
        "alpha_exponent_override": None,
    },
}

# dict-valued entries whose keys are free-form rather than fixed
_FREE_KEYS = {"variant_overrides"}


def _merge(base: dict, user: dict, path: str) -> dict:
    out = copy.deepcopy(base)
    for key, val in user.items():
        where = f"{path}{key}"
        if key not in base:
            raise ValidationError(f"unknown config key {where!r}")
        if isinstance(base[key], dict) and key not in _FREE_KEYS:
            if not isinstance(val, dict):
                raise ValidationError(f"config key {where!r} must be an object")
            out[key] = _merge(base[key], val, where + ".")
        else:
            out[key] = copy.deepcopy(val)
    return out


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def override_patch(spec: str) -> dict:
    if "=" not in spec:
        raise ValidationError(f"override {spec!r} must look like key=value")
    key, raw = spec.split("=", 1)
    parts = key.strip().split(".")
    patch = _parse_value(raw)
    for part in reversed(parts):
        patch = {part: patch}
    return patch


def load_config(command: str, path=None, overrides=(), seed=None, out=None) -> dict:
    """Defaults <- JSON file <- ``--override`` entries <- ``--seed``/``--out``."""
    if command not in DEFAULTS:
        raise ValidationError(f"unknown command {command!r}")
    cfg = copy.deepcopy(DEFAULTS[command])
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ValidationError(f"cannot read config {path}: {exc.strerror or exc}") from exc
        try:
            user = json.loads(text) if text.strip() else {}
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(user, dict):
            raise ValidationError("config file must hold a JSON object")
        cfg = _merge(cfg, user, "")
    for spec in overrides:
        cfg = _merge(cfg, override_patch(spec), "")
    if seed is not None:
        cfg["seed"] = int(seed)
    if out is not None:
        cfg["out"] = str(out)
    return cfg
