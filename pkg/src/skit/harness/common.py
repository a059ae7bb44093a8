"""Shared plumbing: output files, seeded streams and the worker pool."""
from __future__ import annotations

import csv
import json
import math
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from ..linalg import make_rng


class OutputError(OSError):
    """The output location cannot be written."""


class MissingInputError(FileNotFoundError):
    """A required input artifact (snapshots, run directory) is absent."""


def derive_rng(seed: int, *tags):
    """Independent stream per ``(seed, tag...)``; crc32 keeps it stable across processes."""
    key = zlib.crc32("/".join(str(t) for t in tags).encode())
    return make_rng((int(seed) << 32) ^ key)


def prepare_out(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OutputError(f"cannot write to {out}: {exc.strerror or exc}") from exc
    return out


def fmt(v) -> str:
    """CSV cell: floats with 17 significant digits, everything else via str."""
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return format(v, ".17g")
    return str(v)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def _clean(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    return v


def jsonl_line(record: dict) -> str:
    # repr-based float output round-trips exactly
    return json.dumps(_clean(record), sort_keys=True)


def write_jsonl(path, records) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(jsonl_line(r) + "\n")


def worker_count(n_items: int) -> int:
    cap = os.environ.get("SKIT_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(limit, n_items))


def pool_map(fn, items, timing: bool = False) -> list:
    """Ordered map over a thread pool; timing work runs on a single worker."""
    items = list(items)
    workers = 1 if timing else worker_count(len(items))
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))
