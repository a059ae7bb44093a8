"""Two-layer ReLU network with hand-written gradients."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

MATRICES = ("w1", "w2")
VECTORS = ("b1", "b2")


class Forward(NamedTuple):
    out: np.ndarray
    pre: np.ndarray  # hidden pre-activation
    inputs: dict  # layer name -> the matrix actually multiplied by that weight


class TinyMlp:
    def __init__(self, input_dim: int, hidden: int, output: int, rng):
        self.shape = (input_dim, hidden, output)
        self.params = {
            "w1": rng.standard_normal((hidden, input_dim)) * np.sqrt(2.0 / input_dim),
            "b1": np.zeros(hidden),
            "w2": rng.standard_normal((output, hidden)) / np.sqrt(hidden),
            "b2": np.zeros(output),
        }

    def forward(self, x, params=None) -> Forward:
        p = self.params if params is None else params
        h = p["w1"] @ x + p["b1"][:, None]
        a = np.maximum(h, 0.0)
        return Forward(p["w2"] @ a + p["b2"][:, None], h, {"w1": x, "w2": a})

    def loss_and_grads(self, x, y, task: str, params=None):
        p = self.params if params is None else params
        fw = self.forward(x, p)
        n = x.shape[1]
        if task == "regression":
            r = fw.out - y
            loss = 0.5 * float(np.sum(r * r)) / n
            dz = r / n
        else:
            z = fw.out - fw.out.max(axis=0, keepdims=True)
            ez = np.exp(z)
            prob = ez / ez.sum(axis=0, keepdims=True)
            idx = (y, np.arange(n))
            loss = -float(np.mean(np.log(prob[idx])))
            dz = prob
            dz[idx] -= 1.0
            dz /= n
        a = fw.inputs["w2"]
        grads = {"w2": dz @ a.T, "b2": dz.sum(axis=1)}
        dh = (p["w2"].T @ dz) * (fw.pre > 0)
        grads["w1"] = dh @ x.T
        grads["b1"] = dh.sum(axis=1)
        return loss, grads, fw


def flat(params: dict) -> np.ndarray:
    return np.concatenate([params[k].ravel() for k in MATRICES + VECTORS])


def unflat(vec: np.ndarray, like: dict) -> dict:
    out, i = {}, 0
    for k in MATRICES + VECTORS:
        n = like[k].size
        out[k] = vec[i : i + n].reshape(like[k].shape)
        i += n
    return out
