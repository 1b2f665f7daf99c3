"""Experiment configuration files (TOML).

A config is one document with top-level run keys and nested tables::

    experiment = "variance"
    seed = 0
    trials = 400
    degrees = [25, 50, 100, 200]
    basis = "monomial"

    [law]
    kind = "gaussian"
    alpha = 2.0

    [compact]
    kind = "unit_disk"
    weight = "0"

    [[forms]]
    center = [[0.3, 0.1]]
    radius = 0.6

Validation collects every problem with its field path before reporting.
"""

from __future__ import annotations

import math
import sys
from typing import Literal, Optional

import tomli_w
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .compact_weight import PROFILES, WeightExpression, make_test_form
from .ensembles import CoefficientLaw
from .errors import ConfigError
from .experiments import BASIS_RECIPES, Setup

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXPERIMENTS = ("expected", "exact", "variance", "trajectory", "bm", "moment", "projective")
_COMPACT_VARS = {"unit_disk": 1, "circle": 1, "interval": 1, "polydisk": 2, "unit_ball": 2}


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class LawConfig(_Strict):
    kind: Literal["gaussian", "fubini_study", "heavy_tail_iid"] = "gaussian"
    gamma: Optional[float] = None
    delta: Optional[float] = None
    alpha: float = 2.0


class CompactConfig(_Strict):
    kind: Literal["unit_disk", "circle", "interval", "polydisk", "unit_ball"] = "unit_disk"
    weight: str = "0"
    resolution: Optional[int] = Field(default=None, ge=16)


class FormConfig(_Strict):
    center: list[list[float]]
    radius: float = Field(gt=0)
    profile: str = "smooth_bump"
    amplitude: float = 1.0


class AuditConfig(_Strict):
    max_deviation: Optional[float] = Field(default=None, gt=0)
    slope_range: Optional[tuple[float, float]] = None
    quartile_tolerance: float = Field(default=0.05, gt=0)
    cap_tolerance: Optional[float] = Field(default=None, gt=0)


class MomentConfig(_Strict):
    trials: int = Field(default=20000, ge=10000)
    dims: list[int] = [2, 8, 32]


class ExperimentConfig(_Strict):
    experiment: Literal["expected", "exact", "variance", "trajectory", "bm", "moment", "projective"]
    seed: int = Field(default=0, ge=0)
    workers: Optional[int] = Field(default=None, ge=1)
    trials: int = Field(default=100, ge=1)
    degrees: list[int] = Field(min_length=1)
    basis: str = "monomial"
    pairing: Literal["auto", "root_sum", "poincare_lelong"] = "auto"
    target_degree: Optional[int] = Field(default=None, ge=1)
    manifold_dim: Literal[1, 2] = 1
    law: LawConfig = LawConfig()
    compact: CompactConfig = CompactConfig()
    forms: list[FormConfig] = []
    audit: AuditConfig = AuditConfig()
    moment: MomentConfig = MomentConfig()

    @property
    def num_vars(self) -> int:
        if self.experiment == "projective":
            return self.manifold_dim
        return _COMPACT_VARS[self.compact.kind]

    def echo(self) -> str:
        """Canonical TOML text; parsing it gives back an equal config."""
        return tomli_w.dumps(self.model_dump(exclude_none=True))

    def to_setup(self, seed: int | None = None, workers: int = 1) -> Setup:
        law = CoefficientLaw(self.law.kind, self.law.gamma, self.law.delta, m=self.num_vars)
        forms = tuple(make_test_form(tuple(complex(a, b) for a, b in f.center), f.radius, f.profile, f.amplitude)
                      for f in self.forms)
        return Setup(
            experiment=self.experiment,
            law=law,
            compact=(self.compact.kind, self.compact.weight, self.compact.resolution),
            basis=self.basis,
            degrees=tuple(self.degrees),
            trials=self.trials,
            forms=forms,
            seed=self.seed if seed is None else seed,
            workers=workers,
            alpha=self.law.alpha,
            pairing=self.pairing,
            max_deviation=self.audit.max_deviation,
            slope_range=self.audit.slope_range,
            quartile_tolerance=self.audit.quartile_tolerance,
            target_degree=self.target_degree,
            moment_trials=self.moment.trials,
            moment_dims=tuple(self.moment.dims),
            manifold_dim=self.manifold_dim,
            cap_tolerance=self.audit.cap_tolerance,
        )


def _path(loc) -> str:
    out = ""
    for part in loc:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    return out


def _semantic_errors(cfg: ExperimentConfig) -> list[tuple[str, str]]:
    errs: list[tuple[str, str]] = []
    m = cfg.num_vars
    law = cfg.law
    if law.kind == "heavy_tail_iid":
        if law.gamma is None:
            errs.append(("law.gamma", "heavy_tail_iid needs gamma"))
        elif not law.gamma > 2 * m:
            errs.append(("law.gamma", f"gamma must exceed 2m = {2 * m} (got {law.gamma:g})"))
        elif not law.alpha < law.gamma:
            errs.append(("law.alpha", f"alpha must be below gamma = {law.gamma:g}"))
    elif law.gamma is not None or law.delta is not None:
        errs.append(("law", f"gamma and delta apply to heavy_tail_iid only, not {law.kind}"))
    if law.alpha < 1:
        errs.append(("law.alpha", "alpha must be >= 1"))
    if cfg.experiment in ("variance", "trajectory") and law.alpha < 2:
        errs.append(("law.alpha", f"{cfg.experiment} runs need alpha >= 2 (the variance bound uses D_n^(2/alpha) with alpha >= 2)"))
    if law.kind == "heavy_tail_iid" and law.gamma is not None and law.gamma > 2 * m and law.delta is not None:
        try:
            CoefficientLaw(law.kind, law.gamma, law.delta, m=m)
        except ValueError as exc:
            errs.append(("law.delta", str(exc)))
    degs = cfg.degrees
    if any(d < 1 for d in degs):
        errs.append(("degrees", "degrees must be positive"))
    if any(b <= a for a, b in zip(degs, degs[1:])):
        errs.append(("degrees", "degrees must be strictly increasing"))
    if cfg.basis not in BASIS_RECIPES:
        errs.append(("basis", f"unknown basis recipe {cfg.basis!r}; choose from {', '.join(BASIS_RECIPES)}"))
    if cfg.basis == "chebyshev":
        if m != 1:
            errs.append(("basis", "the chebyshev recipe is univariate"))
        if max(degs) > 40:
            errs.append(("degrees", "chebyshev bases are limited to n <= 40 (ill-conditioned monomial conversion)"))
    if cfg.experiment != "projective":
        try:
            WeightExpression(cfg.compact.weight, m)
        except ValueError as exc:
            errs.append(("compact.weight", str(exc)))
    needs_forms = cfg.experiment in ("expected", "exact", "variance", "trajectory")
    if needs_forms and not cfg.forms:
        errs.append(("forms", f"{cfg.experiment} runs need at least one test form"))
    for i, f in enumerate(cfg.forms):
        if f.profile not in PROFILES:
            errs.append((f"forms[{i}].profile", f"unknown profile {f.profile!r}"))
        if len(f.center) != m:
            errs.append((f"forms[{i}].center", f"expected {m} coordinate pair(s), got {len(f.center)}"))
        elif any(len(c) != 2 for c in f.center):
            errs.append((f"forms[{i}].center", "each coordinate is a [re, im] pair"))
    if cfg.experiment in ("expected", "exact", "variance") and cfg.trials < 2:
        errs.append(("trials", "at least 2 trials are needed for a standard error"))
    if cfg.experiment == "variance":
        if cfg.trials < 3:
            errs.append(("trials", "variance runs need at least 3 trials"))
        if len(degs) < 4:
            errs.append(("degrees", "a variance slope needs at least 4 degrees"))
    if cfg.experiment == "projective":
        if cfg.law.kind == "heavy_tail_iid":
            errs.append(("law.kind", "projective runs use the invariant laws"))
        if cfg.trials < 2:
            errs.append(("trials", "at least 2 trials are needed"))
        if cfg.manifold_dim == 2 and max(degs) > 24:
            errs.append(("degrees", "CP^2 systems are limited to n <= 24"))
    if cfg.experiment == "trajectory" and len(degs) < 4:
        errs.append(("degrees", "a trajectory needs at least 4 degrees for a last quartile"))
    if cfg.experiment == "bm" and cfg.compact.kind not in ("circle", "unit_disk", "interval", "polydisk", "unit_ball"):
        errs.append(("compact.kind", "unsupported compact for bm"))
    if cfg.audit.slope_range is not None:
        lo, hi = cfg.audit.slope_range
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            errs.append(("audit.slope_range", "need finite lo < hi"))
    if any(d < 1 for d in cfg.moment.dims):
        errs.append(("moment.dims", "dimensions must be positive"))
    return errs


def validate_config(text: str) -> ExperimentConfig:
    """Parse and validate a TOML config, raising ConfigError with every problem found."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([("", f"TOML syntax: {exc}")]) from None
    try:
        cfg = ExperimentConfig.model_validate(doc)
    except ValidationError as exc:
        raise ConfigError([(_path(e["loc"]), e["msg"]) for e in exc.errors()]) from None
    errs = _semantic_errors(cfg)
    if errs:
        raise ConfigError(errs)
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return validate_config(fh.read())
