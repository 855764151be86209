"""
Configuration loader for FILMLAB.
Merges the built-in defaults with one JSON run document, then resolves
the derived quantities (S, E_max_h) a run needs.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Literal, Sequence

import yaml
from dotenv import find_dotenv, load_dotenv
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from filmlab.diagnostics.corpus import VerifyConfig
from filmlab.ensemble import EnsembleConfig, InitialLaw
from filmlab.governance import (
    ConfigurationError,
    FilmlabError,
    HypothesisEnforcer,
    HypothesisViolation,
)
from filmlab.mesh import Grid, mean, min_value
from filmlab.noise import NoiseSpec, c_strat, s_min, s_opt
from filmlab.physics import ModelParams, c_osc, energy
from filmlab.scheme import SchemeConfig, e_max

SCHEMA_VERSION = 1
OUTPUT_DIR_ENV = "FILMLAB_OUTPUT_DIR"


# ---------------------------------------------------------------------------
# Schema
# ---------------------------------------------------------------------------

class ModelConfig(BaseModel):
    n: float = Field(gt=0.0)
    p: float = Field(gt=0.0)
    c_F: float = Field(ge=0.0)
    kappa: float = Field(ge=0.0)
    S: float | None = Field(default=None, ge=0.0)
    allow_small_s: bool = False


class GridConfig(BaseModel):
    L: float = Field(default=1.0, gt=0.0)
    L_h: int = Field(default=128, ge=3)


class RunConfig(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    schema_version: int = Field(alias="schema")
    mode: Literal["simulate", "verify", "mass-study", "constants"] = "simulate"
    model: ModelConfig
    grid: GridConfig = Field(default_factory=GridConfig)
    scheme: SchemeConfig = Field(default_factory=SchemeConfig)
    noise: NoiseSpec = Field(default_factory=NoiseSpec)
    ensemble: EnsembleConfig = Field(default_factory=EnsembleConfig)
    initial: InitialLaw = Field(default_factory=InitialLaw)
    verify: VerifyConfig = Field(default_factory=VerifyConfig)

    @field_validator("schema_version")
    @classmethod
    def _known_schema(cls, v: int) -> int:
        if v != SCHEMA_VERSION:
            raise ValueError(f"unsupported config schema {v}, expected {SCHEMA_VERSION}")
        return v


# ---------------------------------------------------------------------------
# Loader
# ---------------------------------------------------------------------------

_DEFAULT_CONFIG_PATH = Path(__file__).parent / "config.yaml"


def _deep_merge(base: dict, override: dict) -> dict:
    """Recursively merge override into base."""
    merged = base.copy()
    for key, value in override.items():
        if key in merged and isinstance(merged[key], dict) and isinstance(value, dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _format_validation(e: ValidationError, source: str) -> str:
    lines = [f"{source}: invalid configuration"]
    for err in e.errors():
        where = ".".join(str(part) for part in err["loc"]) or "<root>"
        lines.append(f"  {where}: {err['msg']}")
    return "\n".join(lines)


def load_defaults() -> dict[str, Any]:
    with open(_DEFAULT_CONFIG_PATH, "r") as f:
        return yaml.safe_load(f) or {}


def load_config(path: Path | None = None, overrides: dict[str, Any] | None = None) -> RunConfig:
    """
    Load a run config by merging:
      1. Built-in defaults (filmlab/config.yaml)
      2. The JSON run document at `path`
      3. Programmatic overrides (CLI flags)
      4. FILMLAB_OUTPUT_DIR from the environment or ./.env
    """
    base = load_defaults()
    source = str(path) if path is not None else "<defaults>"

    if path is not None:
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as e:
            raise ConfigurationError(f"cannot read config file {path}: {e.strerror or e}") from e
        try:
            document = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from e
        if not isinstance(document, dict):
            raise ConfigurationError(f"{path}: top level must be a JSON object")
        base = _deep_merge(base, document)

    if overrides:
        base = _deep_merge(base, overrides)

    load_dotenv(find_dotenv(usecwd=True))
    env_dir = os.environ.get(OUTPUT_DIR_ENV)
    if env_dir:
        base = _deep_merge(base, {"ensemble": {"output_dir": env_dir}})

    grid = base.get("grid", {})
    if isinstance(base.get("noise"), dict) and isinstance(grid, dict):
        base["noise"].setdefault("L", grid.get("L", 1.0))

    try:
        config = RunConfig.model_validate(base)
    except ValidationError as e:
        raise ConfigurationError(_format_validation(e, source)) from e

    if config.noise.L != config.grid.L:
        raise ConfigurationError(
            f"{source}: noise.L={config.noise.L} does not match grid.L={config.grid.L}"
        )
    logger.debug(f"[CONFIG] Loaded {source} (mode={config.mode})")
    return config


# ---------------------------------------------------------------------------
# Resolution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ResolvedRun:
    """A validated config with S chosen and the run-level constants computed."""
    config: RunConfig
    params: ModelParams
    grid: Grid
    c_strat: float
    s_min: float
    e_max: float

    @property
    def spec(self) -> NoiseSpec:
        return self.config.noise

    @property
    def scheme(self) -> SchemeConfig:
        return self.config.scheme

    def constants(self) -> dict[str, float]:
        n, L = self.params.n, self.params.L
        return {
            "c_strat": self.c_strat,
            "c_osc": c_osc(self.params.c_F),
            "sigma": self.params.sigma(self.grid.h),
            "e_max_h": self.e_max,
            "s_min": self.s_min,
            "s_opt": s_opt(self.spec, n, L),
            "h": self.grid.h,
            "noise_h4_sum": self.spec.h4_sum,
        }


def resolve(
    config: RunConfig,
    check_initial: bool = True,
    h_levels: Sequence[float] | None = None,
) -> ResolvedRun:
    """
    Choose S, derive E_max_h and enforce the standing hypotheses.

    With `h_levels`, the initial data is checked against the threshold of
    every listed mesh size instead of the configured grid alone.
    """
    m = config.model
    try:
        grid = Grid(config.grid.L, config.grid.L_h)
        params = ModelParams(n=m.n, p=m.p, c_F=m.c_F, L=config.grid.L, kappa=m.kappa, S=m.S or 0.0)
        params.check_hypotheses()
        strat = c_strat(config.noise, m.n, config.grid.L)
        smin = s_min(config.noise, m.n, m.c_F, config.grid.L)
        grids = [Grid.from_h(config.grid.L, h) for h in h_levels] if h_levels else [grid]
        thresholds = [config.scheme.energy_threshold(g.h, params) for g in grids]
    except FilmlabError as e:
        raise ConfigurationError(str(e)) from e

    if m.S is None:
        logger.info(f"[CONFIG] model.S not given; using s_min={smin:.6g}")
        params = params.model_copy(update={"S": smin})
    else:
        HypothesisEnforcer(s_min=smin, e_max=thresholds[0]).check_regularization(
            m.S, allow_small_s=m.allow_small_s
        )

    if check_initial:
        for level, threshold in zip(grids, thresholds):
            u0 = config.initial.sample(level)
            try:
                HypothesisEnforcer(s_min=smin, e_max=threshold).check_initial(
                    energy(u0, params), min_value(u0), mean(u0)
                )
            except HypothesisViolation as e:
                raise HypothesisViolation(f"L_h={level.L_h}: {e}") from e

    return ResolvedRun(
        config=config,
        params=params,
        grid=grid,
        c_strat=strat,
        s_min=smin,
        e_max=e_max(grid.h, m.c_F, m.p) if config.scheme.E_max_h is None else config.scheme.E_max_h,
    )
