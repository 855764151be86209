"""
FILMLAB Corpus — Random Fields for the Check Suite

`samples` fields per family, spread evenly over the (L_h, n, c_F) combinations:
  1. unconstrained positive fields (identities; inequalities are counted
     as out-of-hypothesis when the neighbour ratio exceeds C_osc)
  2. oscillation-constrained fields, built as a closed multiplicative
     random walk so every neighbour ratio, wrap-around included, is
     at most C_osc

The corpus is cut into chunks of (L_h, n, c_F, chunk) with their own
seed streams; chunk reports are folded in key order, so the merged report
does not depend on the worker count.
"""

from __future__ import annotations

import concurrent.futures
import math
from typing import Any

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field as PydanticField

from filmlab.diagnostics.checks import SuiteReport, SuiteTolerances, lemma_suite
from filmlab.governance import FilmlabError
from filmlab.mesh import Field, Grid
from filmlab.noise import NoiseSpec, c_strat
from filmlab.physics import ModelParams, c_osc


class VerifyConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    samples: int = PydanticField(default=1000, ge=1)
    sizes: list[int] = PydanticField(default_factory=lambda: [4, 8, 16, 64])
    n_values: list[float] = PydanticField(default_factory=lambda: [2.1, 2.5, 2.9])
    c_F_values: list[float] = PydanticField(default_factory=lambda: [0.02, 0.5])
    seed: int = PydanticField(default=0, ge=0)
    chunk_size: int = PydanticField(default=50, ge=1)
    low: float = PydanticField(default=0.2, gt=0.0)
    high: float = PydanticField(default=2.0, gt=0.0)
    tolerances: SuiteTolerances = PydanticField(default_factory=SuiteTolerances)


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------

def random_positive_field(grid: Grid, rng: np.random.Generator, low: float = 0.2, high: float = 2.0) -> Field:
    return Field(grid, rng.uniform(low, high, grid.L_h))


def oscillation_constrained_field(
    grid: Grid, rng: np.random.Generator, ratio_bound: float, base: float = 1.0
) -> Field:
    """Positive field with max(u_i/u_{i+1}, u_{i+1}/u_i) <= ratio_bound for every i."""
    r = math.log(ratio_bound)
    steps = rng.uniform(-r / 2.0, r / 2.0, grid.L_h)
    steps -= steps.mean()
    log_u = np.cumsum(steps)
    return Field(grid, base * np.exp(log_u - log_u.mean()))


def random_test_function(grid: Grid, rng: np.random.Generator) -> Field:
    return Field(grid, rng.standard_normal(grid.L_h))


# ---------------------------------------------------------------------------
# Chunk worker
# ---------------------------------------------------------------------------

def _run_chunk(
    key: tuple[int, int, int, int],
    L_h: int,
    params: ModelParams,
    spec: NoiseSpec | None,
    settings: VerifyConfig,
    count: int,
) -> dict[str, Any]:
    try:
        seq = np.random.SeedSequence(settings.seed, spawn_key=key)
        rng = np.random.Generator(np.random.Philox(seq))
        grid = Grid(params.L, L_h)
        strat = c_strat(spec, params.n, params.L) if spec is not None and spec.is_balanced() else None
        report = SuiteReport()
        for _ in range(count):
            v = random_test_function(grid, rng)
            for u in (
                random_positive_field(grid, rng, settings.low, settings.high),
                oscillation_constrained_field(grid, rng, c_osc(params.c_F)),
            ):
                report.add(lemma_suite(u, params, settings.tolerances, spec, strat, v))
        return {"key": key, "status": "ok", "report": report}
    except FilmlabError as e:
        logger.error(f"[VERIFY] Chunk {key} failed: {e}")
        return {"key": key, "status": "error", "error": str(e)}


def corpus_tasks(settings: VerifyConfig, base: ModelParams) -> list[tuple[tuple[int, int, int, int], int, ModelParams, int]]:
    """
    Split `samples` fields per family across the (L_h, n, c_F) combinations,
    the first `samples % combinations` of them taking one extra.
    """
    combos = [
        ((si, ni, ci), L_h, base.model_copy(update={"n": n, "c_F": c_F}))
        for si, L_h in enumerate(settings.sizes)
        for ni, n in enumerate(settings.n_values)
        for ci, c_F in enumerate(settings.c_F_values)
    ]
    share, extra = divmod(settings.samples, len(combos))
    tasks = []
    for index, (prefix, L_h, params) in enumerate(combos):
        total = share + (1 if index < extra else 0)
        for chunk, start in enumerate(range(0, total, settings.chunk_size)):
            count = min(settings.chunk_size, total - start)
            tasks.append(((*prefix, chunk), L_h, params, count))
    return tasks


def run_corpus(
    settings: VerifyConfig,
    base: ModelParams,
    spec: NoiseSpec | None = None,
    workers: int = 1,
) -> tuple[SuiteReport, list[dict[str, Any]]]:
    """Run the suite over the whole corpus; returns the merged report and failed chunks."""
    tasks = corpus_tasks(settings, base)
    logger.info(f"[VERIFY] {len(tasks)} chunks, {settings.samples} fields per family, {workers} workers")
    results: list[dict[str, Any]] = []

    if workers <= 1:
        for key, L_h, params, count in tasks:
            results.append(_run_chunk(key, L_h, params, spec, settings, count))
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as executor:
            future_to_key = {
                executor.submit(_run_chunk, key, L_h, params, spec, settings, count): key
                for key, L_h, params, count in tasks
            }
            for future in concurrent.futures.as_completed(future_to_key):
                key = future_to_key[future]
                try:
                    results.append(future.result())
                except Exception as e:
                    results.append({"key": key, "status": "error", "error": str(e)})

    merged = SuiteReport()
    errors = []
    for result in sorted(results, key=lambda r: r["key"]):
        if result["status"] == "ok":
            merged = merged.merge(result["report"])
        else:
            errors.append(result)
    if errors:
        logger.warning(f"[VERIFY] {len(errors)} chunks failed and were excluded")
    return merged, errors
