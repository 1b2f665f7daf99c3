"""Run a validated config and write report.json, tables/*.csv and manifest.json."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import platform
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pydantic
import scipy

from . import __version__
from .config import ExperimentConfig, load_config
from .experiments import (
    ExperimentReport,
    _clean,
    almost_sure_trajectory,
    bm_experiment,
    exact_expectation_check,
    expected_distribution_experiment,
    moment_experiment,
    variance_decay_experiment,
)
from .projective import global_equidist_experiment

WORKERS_ENV = "PLURIZERO_WORKERS"
EXIT_OK, EXIT_AUDIT, EXIT_ERROR = 0, 1, 2

DISPATCH = {
    "expected": expected_distribution_experiment,
    "exact": exact_expectation_check,
    "variance": variance_decay_experiment,
    "trajectory": almost_sure_trajectory,
    "bm": bm_experiment,
    "moment": moment_experiment,
    "projective": global_equidist_experiment,
}


@dataclass
class RunManifest:
    config_path: str
    config_sha256: str
    seed: int
    workers: int
    started: str
    finished: str
    versions: dict
    outputs: dict = field(default_factory=dict)
    passed: bool = False
    exit_code: int = EXIT_OK

    def to_json(self) -> dict:
        return asdict(self)


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "").strip()
    if not raw:
        return 1
    try:
        w = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}") from None
    if w < 1:
        raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}")
    return w


def _stamp() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def table_csv(rows: list[dict]) -> str:
    """CSV text with columns in first-seen order; lists are JSON-encoded."""
    cols: list[str] = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for r in _clean(rows):
        w.writerow({k: (json.dumps(v) if isinstance(v, (list, dict)) else ("" if v is None else repr(v) if isinstance(v, float) else v))
                    for k, v in r.items()})
    return buf.getvalue()


def execute(cfg: ExperimentConfig, seed: int | None = None, workers: int = 1) -> ExperimentReport:
    setup = cfg.to_setup(seed=seed, workers=workers)
    return DISPATCH[cfg.experiment](setup)


def report_document(cfg: ExperimentConfig, report: ExperimentReport) -> str:
    doc = report.to_json()
    doc["config"] = _clean(cfg.model_dump(exclude_none=True))
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def run(config_path, out_dir, seed: int | None = None, workers: int | None = None) -> RunManifest:
    """Execute the config and write every artifact under ``out_dir``.

    report.json and the tables depend only on (config, seed); timestamps and
    the worker count live in manifest.json.
    """
    started = _stamp()
    raw = Path(config_path).read_bytes()
    cfg = load_config(config_path)
    w = workers if workers is not None else (cfg.workers or default_workers())
    report = execute(cfg, seed=seed, workers=w)
    out = Path(out_dir)
    (out / "tables").mkdir(parents=True, exist_ok=True)
    outputs = {}
    text = report_document(cfg, report).encode("utf-8")
    (out / "report.json").write_bytes(text)
    outputs["report.json"] = _sha256(text)
    for name, rows in sorted(report.tables.items()):
        data = table_csv(rows).encode("utf-8")
        rel = f"tables/{name}.csv"
        (out / rel).write_bytes(data)
        outputs[rel] = _sha256(data)
    manifest = RunManifest(
        config_path=str(Path(config_path).resolve()),
        config_sha256=_sha256(raw),
        seed=report.seed,
        workers=w,
        started=started,
        finished=_stamp(),
        versions={"plurizero": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                  "pydantic": pydantic.VERSION, "python": platform.python_version()},
        outputs=outputs,
        passed=report.passed,
        exit_code=EXIT_OK if report.passed else EXIT_AUDIT,
    )
    (out / "manifest.json").write_text(json.dumps(manifest.to_json(), sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return manifest
