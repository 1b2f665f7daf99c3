"""Command line entry point: ``plurizero run`` and ``plurizero validate``."""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from pathlib import Path

from .config import load_config
from .errors import ConfigError
from .runner import EXIT_AUDIT, EXIT_ERROR, EXIT_OK, WORKERS_ENV, default_workers, run


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _nonneg(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="plurizero", description="Random polynomial zero distribution experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="execute an experiment config")
    r.add_argument("config", type=Path)
    r.add_argument("--seed", type=_nonneg, default=None, help="override the config seed")
    r.add_argument("--workers", type=_positive, default=None,
                   help=f"worker processes (default: config value, then ${WORKERS_ENV}, then 1)")
    r.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: ./out)")
    v = sub.add_parser("validate", help="check a config and print its canonical form")
    v.add_argument("config", type=Path)
    return p


def _error(kind: str, message: str, details=None) -> None:
    doc = {"error": kind, "message": message}
    if details is not None:
        doc["details"] = details
    print(json.dumps(doc, indent=2), file=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            cfg = load_config(args.config)
            sys.stdout.write(cfg.echo())
            return EXIT_OK
        if args.workers is None:
            default_workers()  # surface a bad environment value before running
        manifest = run(args.config, args.out, seed=args.seed, workers=args.workers)
    except ConfigError as exc:
        _error("config", "invalid configuration", [{"path": p, "message": m} for p, m in exc.errors])
        return EXIT_ERROR
    except OSError as exc:
        _error("io", str(exc))
        return EXIT_ERROR
    except Exception as exc:  # structured report for any module failure
        _error(type(exc).__name__, str(exc), traceback.format_exc().splitlines()[-3:])
        return EXIT_ERROR
    status = "passed" if manifest.passed else "FAILED"
    print(f"{status}: report in {args.out / 'report.json'}")
    return EXIT_OK if manifest.passed else EXIT_AUDIT


if __name__ == "__main__":
    sys.exit(main())
