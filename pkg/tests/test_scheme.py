import math

import numpy as np
import pytest

from filmlab.governance import DomainError, HypothesisViolation
from filmlab.mesh import Grid, constant, interpolate, mean
from filmlab.noise import NoiseSpec, NoiseStream
from filmlab.operators import flux_divergence
from filmlab.physics import ModelParams, energy
from filmlab.scheme import (
    SchemeConfig,
    StepTracker,
    check_stopping,
    e_max,
    implicit_operator,
    mobility_operator,
    run_path,
    step,
)
from filmlab.state import PathState

QUIET = NoiseSpec(lambdas={})


def _film(L_h: int = 32, a: float = 0.04):
    return interpolate(lambda x: 1.0 + a * np.cos(2.0 * math.pi * x), Grid(1.0, L_h))


def _params(**kw) -> ModelParams:
    base = dict(n=2.5, p=4.0, c_F=0.05, kappa=1.0, S=0.0)
    base.update(kw)
    return ModelParams(**base)


# ---------------------------------------------------------------------------
# Threshold and stopping
# ---------------------------------------------------------------------------

def test_e_max_hand_values():
    assert e_max(0.25, 1.0, 4.0) == pytest.approx(0.5 * 0.25 ** (-1.0 / 3.0))
    assert e_max(0.25, 1.0, 4.0) == pytest.approx(0.79370, abs=1e-5)
    assert e_max(0.01, 0.3, 2.0) == pytest.approx(0.15)
    assert e_max(0.1, 1.0, 4.0) > e_max(0.2, 1.0, 4.0)


@pytest.mark.parametrize("h", [0.0, 1.5])
def test_e_max_domain(h):
    with pytest.raises(DomainError):
        e_max(h, 1.0, 4.0)


def test_flat_film_does_not_stop():
    state = PathState.start(constant(Grid(1.0, 32), 1.0))
    assert check_stopping(state, SchemeConfig(), _params()) is None


def test_energy_threshold_is_inclusive():
    u = _film()
    params = _params()
    config = SchemeConfig(E_max_h=energy(u, params))
    assert check_stopping(PathState.start(u), config, params) == "energy"


def test_mass_cause_and_energy_precedence():
    u = constant(Grid(1.0, 32), 1.5)
    params = _params()
    drifted = PathState(u=u, initial_mean=1.0)
    assert check_stopping(drifted, SchemeConfig(E_max_h=10.0), params) == "mass"
    assert check_stopping(drifted, SchemeConfig(E_max_h=1e-6), params) == "energy"


def test_frozen_state_serializes_without_field():
    state = PathState.start(_film()).frozen_at(0.25, "mass")
    text = state.to_json()
    assert '"cause": "mass"' in text
    assert '"u"' not in text


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------

def test_mobility_operator_matches_flux(positive_field):
    u = positive_field(16)
    params = _params()
    q = positive_field(16)
    expected = flux_divergence(u, q, params).values
    np.testing.assert_allclose(
        mobility_operator(u, params).matvec(q.values), expected,
        rtol=1e-12, atol=1e-12 * np.max(np.abs(expected)),
    )


def test_implicit_operator_conserves_mass():
    u = _film(16)
    op = implicit_operator(u, _params(), 1e-4, 1.0)
    # column sums equal one: the update preserves the mean
    np.testing.assert_allclose(op.to_dense().sum(axis=0), 1.0, atol=1e-9)


# ---------------------------------------------------------------------------
# Step
# ---------------------------------------------------------------------------

def test_constant_film_is_steady():
    u = constant(Grid(1.0, 16), 1.0)
    params = _params()
    state = step(PathState.start(u), SchemeConfig(dt=1e-3), params, QUIET, NoiseStream(QUIET, 0, 2.5))
    np.testing.assert_allclose(state.u.values, 1.0, atol=1e-14)
    assert state.t == pytest.approx(1e-3)


def test_deterministic_energy_decay_and_mass():
    params = _params()
    config = SchemeConfig(T_max=3e-4, dt=1e-5, E_max_h=1.0)
    stream = NoiseStream(QUIET, 0, 2.5)
    state = PathState.start(_film())
    energies = [energy(state.u, params)]
    means = [mean(state.u)]
    for _ in range(30):
        state = step(state, config, params, QUIET, stream)
        energies.append(energy(state.u, params))
        means.append(mean(state.u))
    assert not state.is_stopped
    for before, after in zip(energies, energies[1:]):
        assert after <= before + 1e-8 * before
    assert energies[-1] < energies[0]
    assert max(abs(m - means[0]) for m in means) <= 1e-12


@pytest.mark.slow
@pytest.mark.parametrize(
    "profile",
    [
        lambda x: np.ones_like(x),
        lambda x: 1.0 + 0.04 * np.cos(2.0 * math.pi * x),
        lambda x: 1.0 + 0.04 * np.cos(2.0 * math.pi * x) + 0.02 * np.cos(4.0 * math.pi * x),
    ],
    ids=["flat", "one-mode", "two-mode"],
)
def test_energy_never_increases_without_noise_or_correction(profile):
    params = _params()
    config = SchemeConfig(dt=1e-5, E_max_h=1.0)
    stream = NoiseStream(QUIET, 0, 2.5)
    state = PathState.start(interpolate(profile, Grid(1.0, 256)))
    before = energy(state.u, params)
    for _ in range(2000):
        state = step(state, config, params, QUIET, stream)
        after = energy(state.u, params)
        assert after <= before + 1e-8 * before
        before = after
    assert not state.is_stopped


def test_exhausted_retries_freeze_with_energy_cause(spec):
    params = _params(S=0.05)
    config = SchemeConfig(positivity_guard=100.0, max_dt_halvings=2, E_max_h=1.0)
    tracker = StepTracker()
    start = PathState.start(_film())
    state = step(start, config, params, spec, NoiseStream(spec, 0, 2.5), tracker=tracker)
    assert state.stopped is not None and state.stopped.cause == "energy"
    assert state.t == start.t
    np.testing.assert_array_equal(state.u.values, start.u.values)
    assert tracker.rejected == 3
    assert tracker.halvings == 2
    assert tracker.min_dt == pytest.approx(config.dt / 4)


def test_stopped_state_is_frozen(spec):
    state = PathState.start(_film()).frozen_at(0.0, "energy")
    assert step(state, SchemeConfig(), _params(), spec, NoiseStream(spec, 0, 2.5)) is state


# ---------------------------------------------------------------------------
# Paths
# ---------------------------------------------------------------------------

def test_flat_film_path_without_noise():
    u0 = constant(Grid(1.0, 16), 1.0)
    config = SchemeConfig(T_max=1e-3, dt=1e-4, sample_every=5)
    rec = run_path(u0, config, _params(), QUIET, NoiseStream(QUIET, 0, 2.5))
    assert rec.stop is None
    assert rec.final.t == pytest.approx(1e-3)
    assert rec.times[0] == 0.0 and rec.times[-1] == pytest.approx(1e-3)
    for f in rec.fields:
        np.testing.assert_allclose(f.values, 1.0, atol=1e-13)
    assert rec.sup_mass_drift <= 1e-13
    assert rec.tracker.accepted == 10


def test_seeded_path_is_reproducible(spec):
    config = SchemeConfig(T_max=2e-4, dt=2e-5, E_max_h=1.0)
    params = _params(S=0.05)
    first = run_path(_film(16), config, params, spec, NoiseStream(spec, 4, params.n))
    second = run_path(_film(16), config, params, spec, NoiseStream(spec, 4, params.n))
    np.testing.assert_array_equal(first.final.u.values, second.final.u.values)
    assert first.integrals == second.integrals
    assert first.times == second.times


def test_path_closes_its_stream(spec):
    stream = NoiseStream(spec, 0, 2.5)
    run_path(_film(16), SchemeConfig(T_max=1e-4, dt=5e-5, E_max_h=1.0), _params(S=0.05), spec, stream)
    assert stream.closed


def test_initial_energy_above_threshold_rejected(spec):
    with pytest.raises(HypothesisViolation):
        run_path(_film(16), SchemeConfig(E_max_h=1e-3), _params(), spec, NoiseStream(spec, 0, 2.5))


def test_stopped_path_is_frozen_until_t_max(spec):
    config = SchemeConfig(T_max=1e-3, dt=1e-4, positivity_guard=100.0, max_dt_halvings=1, E_max_h=1.0)
    rec = run_path(_film(16), config, _params(S=0.05), spec, NoiseStream(spec, 0, 2.5))
    assert rec.stop.cause == "energy"
    assert rec.stop.time == 0.0
    assert rec.times == [0.0, 1e-3]
    np.testing.assert_array_equal(rec.fields[0].values, rec.fields[-1].values)
    assert rec.diagnostics[-1].time == 1e-3
    assert rec.holder == 0.0
