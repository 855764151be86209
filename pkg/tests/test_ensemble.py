import json
import math

import pytest
from pydantic import ValidationError

from filmlab.config_loader import load_config, resolve
from filmlab.ensemble import (
    EnsembleConfig,
    InitialLaw,
    RefinementRow,
    estimate,
    fitted_slope,
    mass_drift_study,
    run_ensemble,
    stopping_trend,
)
from filmlab.governance import ConfigurationError
from filmlab.mesh import Grid, mean
from filmlab.noise import NoiseSpec
from filmlab.persist import REPORT_FILE, write_json
from filmlab.physics import ModelParams
from filmlab.scheme import SchemeConfig

PARAMS = ModelParams(n=2.5, p=4.0, c_F=0.05, kappa=1.0, S=0.05)
SCHEME = SchemeConfig(T_max=1e-3, dt=1e-4, sample_every=5)
SPEC = NoiseSpec(lambdas=[(0, 0.02), (1, 0.02)], seed=11)
INITIAL = InitialLaw(c=1.0, a=0.02)
GRID = Grid(1.0, 32)


def _run(**kw):
    config = EnsembleConfig(**{"n_paths": 4, **kw})
    return run_ensemble(config, PARAMS, SCHEME, SPEC, INITIAL, GRID)


# ---------------------------------------------------------------------------
# Initial law and estimates
# ---------------------------------------------------------------------------

def test_initial_law_requires_positive_profile():
    with pytest.raises(ValidationError):
        InitialLaw(c=0.1, a=0.05, modes=[(2, 0.06)])
    with pytest.raises(ValidationError):
        InitialLaw(c=1.0, a=-0.1)


def test_initial_law_sample_has_mean_c():
    u0 = InitialLaw(c=0.8, a=0.1, modes=[(3, 0.05)]).sample(GRID)
    assert mean(u0) == pytest.approx(0.8, abs=1e-14)
    assert u0.values.max() == pytest.approx(0.95)


def test_moment_orders_below_one_are_rejected():
    with pytest.raises(ValidationError):
        EnsembleConfig(moment_orders=[0.5])


def test_estimate_hand_values():
    q = estimate([1.0, 2.0, 3.0], [1.0, 2.0])
    assert q.mean == 2.0
    assert q.std_error == pytest.approx(1.0 / math.sqrt(3.0))
    assert q.moments == {"1": pytest.approx(2.0), "2": pytest.approx(14.0 / 3.0)}
    assert estimate([5.0], [1.0]).std_error == 0.0


# ---------------------------------------------------------------------------
# Ensembles
# ---------------------------------------------------------------------------

def test_ensemble_report_fields():
    run = _run()
    report = run.report

    assert report.seed == 11
    assert (report.L_h, report.h, report.T_max) == (32, 1 / 32, 1e-3)
    assert [s.index for s in report.paths] == [0, 1, 2, 3]
    assert report.completed + report.excluded == 4
    assert report.completed == 4
    assert len(run.records) == 4
    assert {"sup_R", "sup_mass_drift", "holder", "int_q_pressure"} <= set(report.quantities)
    assert set(report.quantities["sup_R"].moments) == {"1", "2"}
    # only the correction moves the mass, at O(h^2) on this smooth film
    assert report.mass_drift < 1e-10
    assert report.oscillation_violations == 0


def test_ensemble_is_independent_of_worker_count():
    serial = _run(workers=1)
    parallel = _run(workers=2)
    assert serial.report.model_dump_json() == parallel.report.model_dump_json()


def test_merging_disjoint_ranges_matches_full_run():
    full = _run().report
    first = _run(n_paths=2, first_path=0).report
    second = _run(n_paths=2, first_path=2).report
    assert second.merge(first).model_dump() == full.model_dump()


def test_merge_rejects_overlap_and_foreign_reports():
    a = _run(n_paths=2).report
    with pytest.raises(ConfigurationError):
        a.merge(a)
    other = run_ensemble(
        EnsembleConfig(n_paths=2, first_path=2), PARAMS, SCHEME,
        SPEC.model_copy(update={"seed": 12}), INITIAL, GRID,
    ).report
    with pytest.raises(ConfigurationError):
        a.merge(other)


def test_failing_paths_are_excluded_not_fatal():
    strict = SchemeConfig(T_max=1e-3, dt=1e-4, E_max_h=1e-3)
    run = run_ensemble(EnsembleConfig(n_paths=3), PARAMS, strict, SPEC, INITIAL, GRID)
    assert run.report.completed == 0
    assert run.report.excluded == 3
    assert all(s.status == "error" and s.error for s in run.report.paths)
    assert run.report.quantities == {}
    assert run.records == []


# ---------------------------------------------------------------------------
# Refinement
# ---------------------------------------------------------------------------

def _row(h: float, stop_fraction: float) -> RefinementRow:
    return RefinementRow(
        h=h, L_h=round(1 / h), completed=4, mass_drift=0.0,
        mass_drift_std_error=0.0, stop_fraction=stop_fraction, sup_R_mean=0.0,
    )


def test_fitted_slope_recovers_power_law():
    hs = [1 / 16, 1 / 32, 1 / 64]
    assert fitted_slope(hs, [3.0 * h**2 for h in hs]) == pytest.approx(2.0)


def test_fitted_slope_is_none_for_conservative_or_zero_drift():
    hs = [1 / 16, 1 / 32, 1 / 64]
    assert fitted_slope(hs, [1e-15, 0.0, 5e-13]) is None
    assert fitted_slope(hs, [1e-3, 0.0, 1e-4]) is None


def test_stopping_trend():
    assert stopping_trend([_row(1 / 64, 0.0), _row(1 / 16, 0.5), _row(1 / 32, 0.25)])
    assert not stopping_trend([_row(1 / 16, 0.0), _row(1 / 32, 0.25)])


def test_mass_study_needs_three_levels():
    config = EnsembleConfig(n_paths=1, h_list=[1 / 32, 1 / 64])
    with pytest.raises(ConfigurationError, match="at least 3"):
        mass_drift_study(config, PARAMS, SCHEME, SPEC, INITIAL)


def test_mass_study_rows_follow_h_list():
    config = EnsembleConfig(n_paths=2, h_list=[1 / 32, 1 / 64, 1 / 128])
    study = mass_drift_study(config, PARAMS, SCHEME, SPEC, INITIAL)

    assert [r.L_h for r in study.rows] == [32, 64, 128]
    assert all(r.completed == 2 for r in study.rows)
    assert all(r.mass_drift < 1e-10 for r in study.rows)
    assert study.conservative == (study.slope is None)
    assert study.n_paths == 2 and study.seed == 11


def test_longer_horizon_never_lowers_the_drift():
    config = EnsembleConfig(n_paths=2, h_list=[1 / 16, 1 / 32, 1 / 64])
    short = mass_drift_study(config, PARAMS, SCHEME, SPEC, INITIAL)
    doubled = SCHEME.model_copy(update={"T_max": 2 * SCHEME.T_max})
    long = mass_drift_study(config, PARAMS, doubled, SPEC, INITIAL)
    for a, b in zip(short.rows, long.rows):
        assert b.mass_drift >= a.mass_drift


def test_conservative_study_has_no_slope():
    quiet = NoiseSpec(lambdas={}, seed=11)
    config = EnsembleConfig(n_paths=1, h_list=[1 / 16, 1 / 32, 1 / 64])
    study = mass_drift_study(config, PARAMS.model_copy(update={"S": 0.0}), SCHEME, quiet, INITIAL)
    assert study.conservative
    assert study.slope is None
    assert all(r.mass_drift <= 1e-12 for r in study.rows)


# ---------------------------------------------------------------------------
# Acceptance runs
# ---------------------------------------------------------------------------

def _resolved(tmp_path, **sections):
    document = {"schema": 1, "model": {"kappa": 1.0}, **sections}
    path = tmp_path / "run.json"
    path.write_text(json.dumps(document))
    return resolve(load_config(path))


@pytest.mark.slow
def test_default_run_keeps_the_oscillation_bound(tmp_path):
    run = _resolved(tmp_path, grid={"L_h": 128}, ensemble={"n_paths": 32, "workers": 4})
    cfg = run.config
    result = run_ensemble(cfg.ensemble, run.params, run.scheme, run.spec, cfg.initial, run.grid, keep_records=False)
    assert result.report.completed == 32
    assert result.report.oscillation_violations == 0


@pytest.mark.slow
def test_report_bytes_do_not_depend_on_worker_count(tmp_path):
    run = _resolved(tmp_path, grid={"L_h": 32}, scheme={"T_max": 2e-3})
    cfg = run.config
    written = []
    for workers in (1, 4, 16):
        config = cfg.ensemble.model_copy(update={"n_paths": 16, "workers": workers})
        result = run_ensemble(config, run.params, run.scheme, run.spec, cfg.initial, run.grid, keep_records=False)
        written.append(write_json(result.report, tmp_path / str(workers) / REPORT_FILE).read_bytes())
    assert written[0] == written[1] == written[2]


@pytest.mark.slow
def test_moment_estimates_are_stable_under_refinement(tmp_path):
    reports = []
    for L_h in (32, 64):
        run = _resolved(
            tmp_path, grid={"L_h": L_h}, initial={"c": 1.0, "a": 0.02},
            ensemble={"n_paths": 64, "workers": 4},
        )
        cfg = run.config
        reports.append(run_ensemble(
            cfg.ensemble, run.params, run.scheme, run.spec, cfg.initial, run.grid, keep_records=False,
        ).report)
    coarse, fine = reports
    assert coarse.completed == fine.completed == 64
    for name, order in (("sup_R", "1"), ("int_q_pressure", "1"), ("int_q_pressure", "2")):
        a = coarse.quantities[name].moments[order]
        b = fine.quantities[name].moments[order]
        assert max(a, b) <= 1.5 * min(a, b), (name, order, a, b)


@pytest.mark.slow
def test_stopping_fraction_does_not_grow_under_refinement(tmp_path):
    run = _resolved(tmp_path, scheme={"T_max": 0.01})
    cfg = run.config
    config = cfg.ensemble.model_copy(update={"n_paths": 256, "workers": 4, "h_list": [1 / 32, 1 / 64, 1 / 128]})
    study = mass_drift_study(config, run.params, run.scheme, run.spec, cfg.initial)
    assert all(r.completed == 256 for r in study.rows)
    assert study.stopping_trend_monotone


@pytest.mark.slow
def test_mass_drift_refinement_slope(tmp_path):
    run = _resolved(tmp_path)
    cfg = run.config
    config = cfg.ensemble.model_copy(update={"n_paths": 64, "workers": 4})
    study = mass_drift_study(config, run.params, run.scheme, run.spec, cfg.initial)
    assert [r.L_h for r in study.rows] == [32, 64, 128, 256]
    assert not study.conservative
    # at least the first order the correction allows; smooth films reach second order
    assert study.slope >= 0.8
    assert abs(study.slope - 2.0) < 0.4
