"""``skit`` command-line entry point."""
from __future__ import annotations

import argparse
import sys

from .errors import NumericError, ValidationError
from .harness.common import MissingInputError, OutputError
from .harness.config import load_config

COMMANDS = ("bench-fractional", "train", "pstar-trace", "verify")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="skit", description="Schatten-p optimizer benchmarks and verification.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config file; omitted keys take their defaults")
        sp.add_argument("--seed", type=int, help="base seed")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="set a (dotted) config key; the value is parsed as JSON when possible")
    return ap


def _dispatch(command: str, cfg: dict) -> int:
    if command == "bench-fractional":
        from .harness.bench import cmd_bench_fractional

        print(cmd_bench_fractional(cfg))
    elif command == "train":
        from .harness.train import cmd_train

        print(cmd_train(cfg))
    elif command == "pstar-trace":
        from .harness.trace import cmd_pstar_trace

        print(cmd_pstar_trace(cfg))
    else:
        from .harness.verify import cmd_verify

        return cmd_verify(cfg)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.command, args.config, args.override, args.seed, args.out)
        return _dispatch(args.command, cfg)
    except (OutputError, MissingInputError) as exc:
        print(f"skit: error: {exc}", file=sys.stderr)
        return 2
    except ValidationError as exc:
        print(f"skit: invalid configuration: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"skit: numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
