"""
FILMLAB Scheme — Linearly-Implicit Euler-Maruyama With Stopping

One step solves

    (I + theta dt K (Delta_h - F''(u^k))) delta = dt K p^k + dt C^k + dW^k

for delta = u^{k+1} - u^k, where K is the mobility operator frozen at u^k,
C^k the correction drift and dW^k the noise increment (both explicit).
A tentative step that leaves the admissible set is retried with dt halved;
every retry draws fresh normals. Once a path stops its state is frozen.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field as PydanticField
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt

from filmlab.diagnostics.quantities import (
    QUANTITY_NAMES,
    DiagnosticsRecord,
    holder_quotient,
    oscillation_check,
    record,
)
from filmlab.governance import DomainError, HypothesisEnforcer, StepRejected
from filmlab.linalg import CyclicBanded
from filmlab.mesh import Field, mean, min_value
from filmlab.noise import NoiseSpec, NoiseStream, c_strat, noise_increment
from filmlab.operators import drift_parts, require_positive
from filmlab.physics import (
    ModelParams,
    element_mobilities,
    energy,
    oscillation_threshold,
    positivity_floor,
    potential_d2,
)
from filmlab.state import PathState


# ---------------------------------------------------------------------------
# Config
# ---------------------------------------------------------------------------

class SchemeConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    T_max: float = PydanticField(default=0.1, gt=0.0)
    dt: float = PydanticField(default=1e-4, gt=0.0)
    E_max_h: float | None = PydanticField(default=None, gt=0.0)
    implicit_theta: float = PydanticField(default=1.0, ge=0.0, le=1.0)
    max_dt_halvings: int = PydanticField(default=6, ge=0)
    positivity_guard: float = PydanticField(default=0.5, gt=0.0)
    sample_every: int = PydanticField(default=10, ge=1)
    holder_max_pairs: int = PydanticField(default=10_000, ge=1)

    def energy_threshold(self, h: float, params: ModelParams) -> float:
        return self.E_max_h if self.E_max_h is not None else e_max(h, params.c_F, params.p)


def e_max(h: float, c_F: float, p: float) -> float:
    """E_max_h = 1/2 c_F h^(-(p-2)/(p+2))."""
    if not 0.0 < h <= 1.0:
        raise DomainError(f"energy threshold needs h in (0, 1], got h={h!r}")
    return 0.5 * oscillation_threshold(h, c_F, p)


# ---------------------------------------------------------------------------
# Step accounting
# ---------------------------------------------------------------------------

@dataclass
class StepTracker:
    """Accepted/rejected attempts and the smallest dt used along one path."""
    accepted: int = 0
    rejected: int = 0
    halvings: int = 0
    min_dt: float = float("inf")

    def record_attempt(self, dt: float, attempt: int) -> None:
        self.min_dt = min(self.min_dt, dt)
        if attempt > 1:
            self.halvings += 1

    def summary(self) -> dict:
        return {
            "accepted": self.accepted,
            "rejected": self.rejected,
            "halvings": self.halvings,
            "min_dt": self.min_dt if self.accepted or self.rejected else None,
        }


# ---------------------------------------------------------------------------
# Stopping
# ---------------------------------------------------------------------------

def check_stopping(
    state: PathState, config: SchemeConfig, params: ModelParams
) -> Literal["energy", "mass"] | None:
    """Energy takes precedence when both criteria trigger."""
    u = state.u
    if energy(u, params) >= config.energy_threshold(u.grid.h, params):
        return "energy"
    if abs(mean(u) - state.initial_mean) >= state.initial_mean / 2.0:
        return "mass"
    return None


# ---------------------------------------------------------------------------
# Step
# ---------------------------------------------------------------------------

def _reached_end(state: PathState, config: SchemeConfig) -> bool:
    return config.T_max - state.t <= 1e-12 * config.T_max


def _laplacian_operator(size: int, h: float) -> CyclicBanded:
    inv = 1.0 / (h * h)
    return CyclicBanded(size, {
        -1: np.full(size, inv),
        0: np.full(size, -2.0 * inv),
        1: np.full(size, inv),
    })


def mobility_operator(u: Field, params: ModelParams) -> CyclicBanded:
    """(K q)_i = (M_{i+1/2}(q_{i+1} - q_i) - M_{i-1/2}(q_i - q_{i-1}))/h^2."""
    h = u.grid.h
    m = element_mobilities(u, params.sigma(h), params.n) / (h * h)
    m_prev = np.roll(m, 1)
    return CyclicBanded(u.grid.L_h, {-1: m_prev, 0: -(m + m_prev), 1: m})


def implicit_operator(u: Field, params: ModelParams, dt: float, theta: float) -> CyclicBanded:
    n_nodes = u.grid.L_h
    k = mobility_operator(u, params)
    g = _laplacian_operator(n_nodes, u.grid.h) + CyclicBanded(
        n_nodes, {0: -potential_d2(u.values, params)}
    )
    return CyclicBanded.identity(n_nodes) + k.compose(g).scaled(theta * dt)


def _tentative(
    state: PathState,
    dt: float,
    config: SchemeConfig,
    params: ModelParams,
    stream: NoiseStream,
    strat: float,
) -> Field:
    u = state.u
    parts = drift_parts(u, params, strat)
    rhs = dt * parts.total.values + noise_increment(u, dt, stream).values
    delta = implicit_operator(u, params, dt, config.implicit_theta).solve(rhs)
    candidate = Field(u.grid, u.values + delta)

    h = u.grid.h
    guard = config.positivity_guard * positivity_floor(h, params.p)
    if min_value(candidate) <= guard:
        raise StepRejected(f"min u={min_value(candidate):.3e} <= guard {guard:.3e}")
    e_new = energy(candidate, params)
    threshold = config.energy_threshold(h, params)
    if e_new >= threshold:
        raise StepRejected(f"energy {e_new:.6g} >= E_max_h {threshold:.6g}")
    return candidate


def step(
    state: PathState,
    config: SchemeConfig,
    params: ModelParams,
    spec: NoiseSpec,
    stream: NoiseStream,
    strat: float | None = None,
    tracker: StepTracker | None = None,
) -> PathState:
    """One accepted step, or the frozen state if every dt halving was rejected."""
    if state.is_stopped:
        return state
    require_positive(state.u)
    tracker = tracker if tracker is not None else StepTracker()
    strat = c_strat(spec, params.n, params.L) if strat is None else strat
    if _reached_end(state, config):
        return state
    base_dt = min(config.dt, config.T_max - state.t)

    retrying = Retrying(
        stop=stop_after_attempt(config.max_dt_halvings + 1),
        retry=retry_if_exception_type(StepRejected),
        reraise=True,
    )
    try:
        for attempt in retrying:
            with attempt:
                number = attempt.retry_state.attempt_number
                dt = base_dt / 2 ** (number - 1)
                tracker.record_attempt(dt, number)
                try:
                    candidate = _tentative(state, dt, config, params, stream, strat)
                except StepRejected as e:
                    tracker.rejected += 1
                    logger.debug(f"[SCHEME] t={state.t:.6g} attempt {number} rejected: {e}")
                    raise
    except StepRejected:
        logger.info(f"[SCHEME] Path {stream.path_index}: retries exhausted at t={state.t:.6g}")
        return state.frozen_at(state.t, "energy")

    tracker.accepted += 1
    advanced = state.advanced(candidate, dt)
    cause = check_stopping(advanced, config, params)
    if cause is not None:
        logger.info(f"[SCHEME] Path {stream.path_index}: stopped by {cause} at t={advanced.t:.6g}")
        return advanced.frozen_at(advanced.t, cause)
    return advanced


# ---------------------------------------------------------------------------
# Path
# ---------------------------------------------------------------------------

@dataclass
class PathRecord:
    """Everything one path leaves behind."""
    path_index: int
    times: list[float] = field(default_factory=list)
    fields: list[Field] = field(default_factory=list)
    diagnostics: list[DiagnosticsRecord] = field(default_factory=list)
    final: PathState | None = None
    integrals: dict[str, float] = field(default_factory=dict)
    sup_R: float = 0.0
    sup_mass_drift: float = 0.0
    oscillation_violations: int = 0
    holder: float = 0.0
    tracker: StepTracker = field(default_factory=StepTracker)

    @property
    def stop(self):
        return self.final.stopped if self.final is not None else None

    def sample(self, state: PathState, diag: DiagnosticsRecord) -> None:
        self.times.append(state.t)
        self.fields.append(state.u)
        self.diagnostics.append(diag)


def run_path(
    u0: Field,
    config: SchemeConfig,
    params: ModelParams,
    spec: NoiseSpec,
    stream: NoiseStream,
    strat: float | None = None,
) -> PathRecord:
    """Advance one path to T_max, freezing it once it stops."""
    require_positive(u0)
    strat = c_strat(spec, params.n, params.L) if strat is None else strat
    threshold = config.energy_threshold(u0.grid.h, params)
    HypothesisEnforcer(s_min=0.0, e_max=threshold).check_initial(
        energy(u0, params), min_value(u0), mean(u0)
    )

    state = PathState.start(u0)
    rec = PathRecord(path_index=stream.path_index)
    rec.integrals = {name: 0.0 for name in QUANTITY_NAMES}

    diag = record(u0, drift_parts(u0, params, strat).pressure, params, spec, time=0.0)
    rec.sample(state, diag)
    rec.sup_R = diag.combined_R

    step_count = 0
    while not state.is_stopped and not _reached_end(state, config):
        previous = state
        state = step(state, config, params, spec, stream, strat, rec.tracker)
        if state is previous or state.t == previous.t:
            break

        # left Riemann sums over accepted steps
        dt = state.t - previous.t
        for name in QUANTITY_NAMES:
            rec.integrals[name] += getattr(diag, name) * dt

        diag = record(state.u, drift_parts(state.u, params, strat).pressure, params, spec, state.t)
        rec.sup_R = max(rec.sup_R, diag.combined_R)
        rec.sup_mass_drift = max(rec.sup_mass_drift, abs(diag.mean_u - state.initial_mean))
        if not state.is_stopped and oscillation_check(state.u, params).violated:
            rec.oscillation_violations += 1
            logger.warning(f"[SCHEME] Path {stream.path_index}: oscillation bound violated at t={state.t:.6g}")

        step_count += 1
        if step_count % config.sample_every == 0 or state.is_stopped or _reached_end(state, config):
            rec.sample(state, diag)

    if rec.times[-1] != state.t:
        rec.sample(state, diag)
    if state.is_stopped and state.t < config.T_max:
        # frozen until T_max
        rec.times.append(config.T_max)
        rec.fields.append(state.u)
        rec.diagnostics.append(replace(diag, time=config.T_max))
    rec.final = state
    if len(rec.fields) >= 2:
        rec.holder = holder_quotient(rec.times, rec.fields, config.holder_max_pairs)
    stream.close()
    return rec
