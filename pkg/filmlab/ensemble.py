"""
FILMLAB Ensemble — Seeded Monte-Carlo Paths (v1.0)

Path-parallel execution. Each worker:
  1. Builds the initial film from the configured law.
  2. Opens the noise streams owned by its path index.
  3. Runs the path to T_max (or its stopping time) and returns a summary.

Summaries are folded in path-index order, so the report is identical for
any worker count and any partition of the path indices.
"""

from __future__ import annotations

import concurrent.futures
import math
from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field as PydanticField, model_validator

from filmlab.diagnostics.quantities import QUANTITY_NAMES
from filmlab.governance import ConfigurationError, FilmlabError
from filmlab.mesh import Field, Grid, interpolate
from filmlab.noise import NoiseSpec, NoiseStream, c_strat
from filmlab.physics import ModelParams
from filmlab.scheme import PathRecord, SchemeConfig, run_path

REPORT_SCHEMA_VERSION = 1
CONSERVATIVE_DRIFT = 1e-12


# ---------------------------------------------------------------------------
# Config
# ---------------------------------------------------------------------------

class EnsembleConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_paths: int = PydanticField(default=8, ge=1)
    first_path: int = PydanticField(default=0, ge=0)
    moment_orders: list[float] = PydanticField(default_factory=lambda: [1.0, 2.0], min_length=1)
    h_list: list[float] = PydanticField(default_factory=lambda: [1 / 32, 1 / 64, 1 / 128, 1 / 256])
    workers: int = PydanticField(default=1, ge=1)
    output_dir: str = "runs/latest"

    @model_validator(mode="after")
    def _check_orders(self) -> EnsembleConfig:
        if any(not q >= 1.0 for q in self.moment_orders):
            raise ValueError(f"moment orders must be >= 1, got {self.moment_orders}")
        return self


class InitialLaw(BaseModel):
    """u0 = c + a cos(2 pi x / L) + sum_k b_k cos(2 pi k x / L)."""
    model_config = ConfigDict(frozen=True)

    c: float = 1.0
    a: float = 0.04
    modes: list[tuple[int, float]] = PydanticField(default_factory=list)

    @model_validator(mode="after")
    def _check_positive(self) -> InitialLaw:
        if not self.c > abs(self.a) + sum(abs(b) for _, b in self.modes):
            raise ValueError("initial law needs c > |a| + sum |b_k| for a positive film")
        if self.a < 0.0:
            raise ValueError(f"initial amplitude a must be >= 0, got {self.a}")
        return self

    def sample(self, grid: Grid) -> Field:
        L = grid.L

        def profile(x):
            out = self.c + self.a * np.cos(2.0 * math.pi * x / L)
            for k, b in self.modes:
                out = out + b * np.cos(2.0 * math.pi * k * x / L)
            return out

        return interpolate(profile, grid)


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------

class PathSummary(BaseModel):
    index: int
    status: Literal["ok", "error"]
    error: str | None = None
    stop_time: float | None = None
    stop_cause: Literal["energy", "mass"] | None = None
    sup_R: float = 0.0
    sup_mass_drift: float = 0.0
    holder: float = 0.0
    oscillation_violations: int = 0
    integrals: dict[str, float] = PydanticField(default_factory=dict)
    steps: dict[str, Any] = PydanticField(default_factory=dict)


class QuantityEstimate(BaseModel):
    mean: float
    std_error: float
    moments: dict[str, float] = PydanticField(default_factory=dict)


class StoppingStats(BaseModel):
    fraction: float = 0.0
    causes: dict[str, int] = PydanticField(default_factory=dict)
    times: list[float] = PydanticField(default_factory=list)


class RefinementRow(BaseModel):
    h: float
    L_h: int
    completed: int
    mass_drift: float
    mass_drift_std_error: float
    stop_fraction: float
    sup_R_mean: float
    moments: dict[str, float] = PydanticField(default_factory=dict)


class EnsembleReport(BaseModel):
    schema_version: int = REPORT_SCHEMA_VERSION
    seed: int
    L: float
    L_h: int
    h: float
    T_max: float
    moment_orders: list[float]
    n_paths: int
    completed: int
    excluded: int
    quantities: dict[str, QuantityEstimate] = PydanticField(default_factory=dict)
    stopping: StoppingStats = PydanticField(default_factory=StoppingStats)
    mass_drift: float = 0.0
    oscillation_violations: int = 0
    paths: list[PathSummary] = PydanticField(default_factory=list)

    @classmethod
    def from_paths(
        cls,
        paths: list[PathSummary],
        *,
        seed: int,
        grid: Grid,
        T_max: float,
        moment_orders: list[float],
    ) -> EnsembleReport:
        ordered = sorted(paths, key=lambda s: s.index)
        ok = [s for s in ordered if s.status == "ok"]
        report = cls(
            seed=seed,
            L=grid.L,
            L_h=grid.L_h,
            h=grid.h,
            T_max=T_max,
            moment_orders=list(moment_orders),
            n_paths=len(ordered),
            completed=len(ok),
            excluded=len(ordered) - len(ok),
            paths=ordered,
        )
        if not ok:
            return report

        columns: dict[str, list[float]] = {
            "sup_R": [s.sup_R for s in ok],
            "sup_mass_drift": [s.sup_mass_drift for s in ok],
            "holder": [s.holder for s in ok],
        }
        for name in QUANTITY_NAMES:
            columns[f"int_{name}"] = [s.integrals.get(name, 0.0) for s in ok]
        report.quantities = {k: estimate(v, moment_orders) for k, v in columns.items()}

        stopped = [s for s in ok if s.stop_cause is not None]
        causes: dict[str, int] = {}
        for s in stopped:
            causes[s.stop_cause] = causes.get(s.stop_cause, 0) + 1
        report.stopping = StoppingStats(
            fraction=len(stopped) / len(ok),
            causes=dict(sorted(causes.items())),
            times=[s.stop_time for s in stopped],
        )
        report.mass_drift = report.quantities["sup_mass_drift"].mean
        report.oscillation_violations = sum(s.oscillation_violations for s in ok)
        return report

    def merge(self, other: EnsembleReport) -> EnsembleReport:
        """Combine two reports over disjoint path indices on the same grid."""
        if (self.L, self.L_h, self.seed, self.T_max) != (other.L, other.L_h, other.seed, other.T_max):
            raise ConfigurationError("can only merge reports of the same grid, seed and T_max")
        seen = {s.index for s in self.paths}
        if any(s.index in seen for s in other.paths):
            raise ConfigurationError("merged reports must cover disjoint path indices")
        return EnsembleReport.from_paths(
            self.paths + other.paths,
            seed=self.seed,
            grid=Grid(self.L, self.L_h),
            T_max=self.T_max,
            moment_orders=self.moment_orders,
        )


def estimate(values: list[float], orders: list[float]) -> QuantityEstimate:
    """Sample mean, its standard error across independent paths and absolute moments."""
    x = np.asarray(values, dtype=np.float64)
    se = float(np.std(x, ddof=1) / math.sqrt(x.shape[0])) if x.shape[0] > 1 else 0.0
    return QuantityEstimate(
        mean=float(np.mean(x)),
        std_error=se,
        moments={_order_key(q): float(np.mean(np.abs(x) ** q)) for q in orders},
    )


def _order_key(q: float) -> str:
    return f"{q:g}"


# ---------------------------------------------------------------------------
# Workers
# ---------------------------------------------------------------------------

@dataclass
class EnsembleRun:
    report: EnsembleReport
    records: list[PathRecord] = field(default_factory=list)


def _summarize(rec: PathRecord) -> PathSummary:
    stop = rec.stop
    return PathSummary(
        index=rec.path_index,
        status="ok",
        stop_time=stop.time if stop else None,
        stop_cause=stop.cause if stop else None,
        sup_R=rec.sup_R,
        sup_mass_drift=rec.sup_mass_drift,
        holder=rec.holder,
        oscillation_violations=rec.oscillation_violations,
        integrals=dict(rec.integrals),
        steps=rec.tracker.summary(),
    )


def _run_single_path(
    index: int,
    grid: Grid,
    params: ModelParams,
    scheme: SchemeConfig,
    spec: NoiseSpec,
    initial: InitialLaw,
    strat: float,
    keep_record: bool,
) -> dict[str, Any]:
    """Path worker. Failures become error summaries; they never abort the ensemble."""
    try:
        stream = NoiseStream(spec, index, params.n)
        rec = run_path(initial.sample(grid), scheme, params, spec, stream, strat)
        return {
            "index": index,
            "summary": _summarize(rec),
            "record": rec if keep_record else None,
        }
    except FilmlabError as e:
        logger.warning(f"[ENSEMBLE] Path {index} excluded: {e}")
        return {"index": index, "summary": PathSummary(index=index, status="error", error=str(e))}


def run_ensemble(
    config: EnsembleConfig,
    params: ModelParams,
    scheme: SchemeConfig,
    spec: NoiseSpec,
    initial: InitialLaw,
    grid: Grid,
    keep_records: bool = True,
) -> EnsembleRun:
    """Run `n_paths` seeded paths starting at `first_path`."""
    params.check_hypotheses()
    strat = c_strat(spec, params.n, params.L)
    indices = range(config.first_path, config.first_path + config.n_paths)
    logger.info(
        f"[ENSEMBLE] {config.n_paths} paths on L_h={grid.L_h}, "
        f"T_max={scheme.T_max}, {config.workers} workers"
    )

    results: list[dict[str, Any]] = []
    args = (grid, params, scheme, spec, initial, strat, keep_records)
    if config.workers <= 1:
        results = [_run_single_path(i, *args) for i in indices]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=config.workers) as executor:
            future_to_index = {executor.submit(_run_single_path, i, *args): i for i in indices}
            for future in concurrent.futures.as_completed(future_to_index):
                index = future_to_index[future]
                try:
                    results.append(future.result())
                except Exception as e:
                    logger.warning(f"[ENSEMBLE] Path {index} worker failed: {e}")
                    results.append({
                        "index": index,
                        "summary": PathSummary(index=index, status="error", error=str(e)),
                    })

    results.sort(key=lambda r: r["index"])
    report = EnsembleReport.from_paths(
        [r["summary"] for r in results],
        seed=spec.seed,
        grid=grid,
        T_max=scheme.T_max,
        moment_orders=config.moment_orders,
    )
    if report.excluded:
        logger.warning(f"[ENSEMBLE] {report.excluded} of {report.n_paths} paths excluded")
    records = [r["record"] for r in results if r.get("record") is not None]
    return EnsembleRun(report=report, records=records)


# ---------------------------------------------------------------------------
# Refinement studies
# ---------------------------------------------------------------------------

class MassStudyReport(BaseModel):
    schema_version: int = REPORT_SCHEMA_VERSION
    seed: int
    T_max: float
    n_paths: int
    rows: list[RefinementRow]
    slope: float | None
    conservative: bool
    stopping_trend_monotone: bool


def refinement_row(report: EnsembleReport) -> RefinementRow:
    drift = report.quantities.get("sup_mass_drift")
    sup_r = report.quantities.get("sup_R")
    moments = {}
    if sup_r is not None:
        moments.update({f"sup_R^{k}": v for k, v in sup_r.moments.items()})
    pressure = report.quantities.get("int_q_pressure")
    if pressure is not None:
        moments.update({f"int_q_pressure^{k}": v for k, v in pressure.moments.items()})
    return RefinementRow(
        h=report.h,
        L_h=report.L_h,
        completed=report.completed,
        mass_drift=drift.mean if drift else 0.0,
        mass_drift_std_error=drift.std_error if drift else 0.0,
        stop_fraction=report.stopping.fraction,
        sup_R_mean=sup_r.mean if sup_r else 0.0,
        moments=moments,
    )


def fitted_slope(hs: list[float], drifts: list[float]) -> float | None:
    """Least-squares slope of log drift against log h; None when the drift vanishes."""
    if all(d <= CONSERVATIVE_DRIFT for d in drifts):
        return None
    if any(d <= 0.0 for d in drifts):
        return None
    slope, _ = np.polyfit(np.log(hs), np.log(drifts), 1)
    return float(slope)


def stopping_trend(rows: list[RefinementRow]) -> bool:
    """True when the stopping fraction does not increase as h decreases."""
    ordered = sorted(rows, key=lambda r: -r.h)
    fractions = [r.stop_fraction for r in ordered]
    return all(b <= a for a, b in zip(fractions, fractions[1:]))


def mass_drift_study(
    config: EnsembleConfig,
    params: ModelParams,
    scheme: SchemeConfig,
    spec: NoiseSpec,
    initial: InitialLaw,
) -> MassStudyReport:
    """E[sup_t |mean(u) - mean(u0)|] per mesh size and its log-log slope."""
    if len(config.h_list) < 3:
        raise ConfigurationError(f"mass study needs at least 3 mesh levels, got {len(config.h_list)}")

    rows = []
    for h in config.h_list:
        grid = Grid.from_h(params.L, h)
        run = run_ensemble(config, params, scheme, spec, initial, grid, keep_records=False)
        rows.append(refinement_row(run.report))
        logger.info(f"[ENSEMBLE] h={h:.6g}: drift={rows[-1].mass_drift:.6g}, stopped={rows[-1].stop_fraction:.3f}")

    drifts = [r.mass_drift for r in rows]
    slope = fitted_slope([r.h for r in rows], drifts)
    return MassStudyReport(
        seed=spec.seed,
        T_max=scheme.T_max,
        n_paths=config.n_paths,
        rows=rows,
        slope=slope,
        conservative=all(d <= CONSERVATIVE_DRIFT for d in drifts),
        stopping_trend_monotone=stopping_trend(rows),
    )
