"""Simulated data-parallel computation of the curvature diagonal.

Activations are split by sample columns across ranks. Each rank squares its
own projection ``A_r^T V`` column-wise and a single all-reduce of length
``min(m, n)`` sums the pieces. No real networking is involved; the
communication ledger records what a collective would send.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import NumericError, ValidationError
from .linalg import as_matrix, svd
from .selector import SpectralStats


@dataclass(frozen=True)
class ShardedActivations:
    shards: tuple

    def __post_init__(self):
        if not self.shards:
            raise ValidationError("at least one shard is required")
        rows = {s.shape[0] for s in self.shards}
        if len(rows) != 1:
            raise ValidationError(f"shards disagree on row count: {sorted(rows)}")

    @property
    def ranks(self) -> int:
        return len(self.shards)

    @property
    def k(self) -> int:
        return sum(s.shape[1] for s in self.shards)

    @classmethod
    def split(cls, a, ranks: int, rng: np.random.Generator | None = None) -> "ShardedActivations":
        """Contiguous column blocks; random block boundaries when ``rng`` is given."""
        a = as_matrix(a, "activations")
        k = a.shape[1]
        if not 1 <= ranks <= k:
            raise ValidationError(f"cannot split {k} columns over {ranks} ranks")
        if rng is None:
            cuts = np.linspace(0, k, ranks + 1).round().astype(int)
        else:
            inner = np.sort(rng.choice(np.arange(1, k), size=ranks - 1, replace=False))
            cuts = np.concatenate([[0], inner, [k]])
        return cls(tuple(a[:, cuts[i] : cuts[i + 1]].copy() for i in range(ranks)))


class Message(NamedTuple):
    op: str
    ranks: int
    length: int


@dataclass
class CommLedger:
    messages: list = field(default_factory=list)

    def record(self, op: str, ranks: int, length: int) -> None:
        self.messages.append(Message(op, ranks, length))

    @property
    def reductions(self) -> int:
        return sum(1 for m in self.messages if m.op == "all_reduce_sum")

    def volume(self) -> int:
        return sum(m.ranks * m.length for m in self.messages)

    def to_jsonl(self) -> str:
        return "".join(json.dumps({"comm": m._asdict()}) + "\n" for m in self.messages)


def local_curvature(shard, vm) -> np.ndarray:
    """``||shard^T V e_i||^2`` for every column i of ``vm``."""
    shard = as_matrix(shard, "shard")
    vm = as_matrix(vm, "vm")
    if shard.shape[0] != vm.shape[0]:
        raise ValidationError(f"shard has {shard.shape[0]} rows but V has {vm.shape[0]}")
    proj = shard.T @ vm
    return np.einsum("ij,ij->j", proj, proj)


def all_reduce_sum(contributions, ledger: CommLedger | None = None) -> np.ndarray:
    """Fixed rank-order fold, so the sum is bit-stable for a given partition."""
    if not contributions:
        raise ValidationError("no contributions to reduce")
    vecs = [np.asarray(c, dtype=np.float64) for c in contributions]
    n = vecs[0].shape
    if any(v.shape != n for v in vecs):
        raise ValidationError("contributions differ in length")
    total = vecs[0].copy()
    for v in vecs[1:]:
        total += v
    if ledger is not None:
        ledger.record("all_reduce_sum", len(vecs), int(n[0]) if n else 1)
    return total


def sharded_stats(sharded: ShardedActivations, m, g, ledger: CommLedger | None = None, full_gram: bool = False):
    """Statistics equal to ``compute_stats(m, g, concat(shards))``.

    With ``full_gram`` the reduction carries ``V^T A A^T V`` (length r^2)
    instead of its diagonal, and the Gram matrix is returned alongside.
    """
    m = as_matrix(m, "momentum")
    g = as_matrix(g, "gradient")
    if m.shape != g.shape:
        raise ValidationError("momentum and gradient differ in shape")
    if sharded.shards[0].shape[0] != m.shape[1]:
        raise ValidationError("shard rows must equal the parameter's column count")
    res = svd(m)
    if res.rank == 0:
        raise NumericError("momentum is zero; its singular basis is undefined")
    v = res.vt.T
    c = np.einsum("ij,ij->j", res.u, g @ v)
    ledger = ledger if ledger is not None else CommLedger()
    if full_gram:
        parts = [(v.T @ s) @ (s.T @ v) for s in sharded.shards]
        gram = all_reduce_sum([p.ravel() for p in parts], ledger).reshape(v.shape[1], v.shape[1])
        return SpectralStats(res.sigma, c, np.diag(gram).copy(), sharded.k), gram
    b = all_reduce_sum([local_curvature(s, v) for s in sharded.shards], ledger)
    return SpectralStats(res.sigma, c, b, sharded.k)
