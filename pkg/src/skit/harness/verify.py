"""Run the acceptance checks and write human and JSON reports."""
from __future__ import annotations

import json

from ..acceptance import CRITERIA, run_criterion
from ..errors import ValidationError
from .common import prepare_out


def cmd_verify(cfg: dict, echo=print) -> int:
    """Exit status 0 iff every selected criterion passes."""
    numbers = [int(n) for n in cfg["criteria"]]
    bad = [n for n in numbers if n not in CRITERIA]
    if bad:
        raise ValidationError(f"unknown criteria {bad}")
    out = prepare_out(cfg["out"])
    opts = {"alpha_exponent_override": cfg["alpha_exponent_override"]}
    results = []
    for n in numbers:
        res = run_criterion(n, opts)
        echo(res.line())
        results.append(res)
    failed = [r.number for r in results if not r.passed]
    lines = [r.line() for r in results]
    lines.append(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    if failed:
        lines.append("failed: " + ", ".join(str(n) for n in failed))
    (out / "verify_report.txt").write_text("\n".join(lines) + "\n")
    payload = {"passed": not failed, "failed": failed, "criteria": [r.to_dict() for r in results]}
    (out / "verify_report.json").write_text(json.dumps(payload, indent=2, default=float) + "\n")
    for line in lines[len(results):]:
        echo(line)
    return 1 if failed else 0
