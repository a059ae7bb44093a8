"""Seeded synthetic tasks. Samples are stored column-wise (features x samples)."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from ..errors import ValidationError


class Dataset(NamedTuple):
    x: np.ndarray  # d x N
    y: np.ndarray  # class labels (N,) or regression targets (c x N)
    classes: int
    task: str


def gaussian_mixture(n: int, dim: int, classes: int, separation: float, noise: float, rng) -> Dataset:
    """Isotropic clusters around random centers of norm ``separation``.

    Large separation with small noise makes the classes linearly separable.
    """
    if n < classes or dim < 1 or classes < 2:
        raise ValidationError("need n >= classes >= 2 and dim >= 1")
    centers = rng.standard_normal((dim, classes))
    centers *= separation / np.linalg.norm(centers, axis=0, keepdims=True)
    labels = rng.integers(0, classes, size=n)
    x = centers[:, labels] + noise * rng.standard_normal((dim, n))
    return Dataset(x, labels, classes, "mixture")


def teacher_student(n: int, dim: int, out: int, hidden: int, noise: float, rng) -> Dataset:
    w1 = rng.standard_normal((hidden, dim)) / np.sqrt(dim)
    w2 = rng.standard_normal((out, hidden)) / np.sqrt(hidden)
    x = rng.standard_normal((dim, n))
    y = w2 @ np.maximum(w1 @ x, 0.0) + noise * rng.standard_normal((out, n))
    return Dataset(x, y, out, "regression")


def make_dataset(cfg: dict, rng) -> Dataset:
    if cfg["task"] == "mixture":
        return gaussian_mixture(cfg["n_train"], cfg["input_dim"], cfg["classes"], cfg["separation"], cfg["noise"], rng)
    if cfg["task"] == "teacher":
        return teacher_student(cfg["n_train"], cfg["input_dim"], cfg["classes"], cfg["hidden"], cfg["noise"], rng)
    raise ValidationError(f"unknown task {cfg['task']!r}")
