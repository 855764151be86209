import csv
import json

import numpy as np
import pytest

from filmlab.ensemble import (
    EnsembleConfig,
    EnsembleReport,
    InitialLaw,
    MassStudyReport,
    RefinementRow,
    run_ensemble,
)
from filmlab.governance import PersistError
from filmlab.mesh import Grid
from filmlab.noise import NoiseSpec
from filmlab.persist import (
    DIAGNOSTICS_FILE,
    REPORT_FILE,
    SCHEMA_FILE,
    TRAJECTORY_FILE,
    export_schema,
    persist,
    read_report,
    read_trajectories,
    write_json,
)
from filmlab.physics import ModelParams
from filmlab.plots import emit_plots
from filmlab.scheme import SchemeConfig

GRID = Grid(1.0, 32)


def _ensemble(seed: int = 3):
    return run_ensemble(
        EnsembleConfig(n_paths=2),
        ModelParams(n=2.5, p=4.0, c_F=0.05, kappa=1.0, S=0.05),
        SchemeConfig(T_max=5e-4, dt=1e-4, sample_every=2),
        NoiseSpec(lambdas=[(0, 0.02), (1, 0.02)], seed=seed),
        InitialLaw(c=1.0, a=0.02),
        GRID,
    )


def test_same_seed_gives_identical_report_bytes(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    persist(_ensemble().report, a)
    persist(_ensemble().report, b)
    assert (a / REPORT_FILE).read_bytes() == (b / REPORT_FILE).read_bytes()


def test_report_reads_back(tmp_path):
    run = _ensemble()
    persist(run.report, tmp_path, run.records)
    assert read_report(tmp_path / REPORT_FILE) == run.report


def test_trajectories_read_back_exactly(tmp_path):
    run = _ensemble()
    persist(run.report, tmp_path, run.records)
    back = read_trajectories(tmp_path / TRAJECTORY_FILE)

    assert sorted(back) == [0, 1]
    for rec in run.records:
        times, fields = back[rec.path_index]
        assert times == rec.times
        for got, want in zip(fields, rec.fields):
            np.testing.assert_array_equal(got, want.values)


def test_diagnostics_csv_has_one_row_per_sample(tmp_path):
    run = _ensemble()
    persist(run.report, tmp_path, run.records)
    with open(tmp_path / DIAGNOSTICS_FILE, newline="") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == sum(len(rec.diagnostics) for rec in run.records)
    assert {"path", "time", "energy", "combined_R", "q_pressure"} <= set(rows[0])


def test_persist_without_records_writes_empty_csvs(tmp_path):
    persist(_ensemble().report, tmp_path)
    assert read_trajectories(tmp_path / TRAJECTORY_FILE) == {}


def test_unwritable_directory_raises_persist_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(PersistError):
        persist(_ensemble().report, blocker / "out")
    with pytest.raises(PersistError):
        read_report(tmp_path / "missing.json")


def test_write_json_sorts_plain_dicts(tmp_path):
    path = write_json({"b": 1, "a": [1.5]}, tmp_path / "x" / "summary.json")
    assert path.read_text() == '{\n  "a": [\n    1.5\n  ],\n  "b": 1\n}\n'


def test_schema_export_describes_the_report(tmp_path):
    schema = json.loads(export_schema(tmp_path).read_text())
    assert (tmp_path / SCHEMA_FILE).exists()
    assert {"quantities", "stopping", "paths"} <= set(schema["properties"])
    assert "refinement" not in schema["properties"]


# ---------------------------------------------------------------------------
# Plots
# ---------------------------------------------------------------------------

def test_no_data_no_figures(tmp_path):
    empty = EnsembleReport.from_paths([], seed=1, grid=GRID, T_max=1.0, moment_orders=[1.0])
    assert emit_plots(empty, tmp_path / "plots", records=[]) == []
    assert not (tmp_path / "plots").exists()


def test_ensemble_figures(tmp_path):
    run = _ensemble()
    written = emit_plots(run.report, tmp_path, run.records)
    assert tmp_path / "energy_entropy.png" in written
    assert all(p.stat().st_size > 0 for p in written)


def test_mass_study_figure(tmp_path):
    rows = [
        RefinementRow(
            h=h, L_h=round(1 / h), completed=2, mass_drift=h**2,
            mass_drift_std_error=0.0, stop_fraction=0.0, sup_R_mean=1.0,
        )
        for h in (1 / 16, 1 / 32, 1 / 64)
    ]
    study = MassStudyReport(
        seed=1, T_max=1.0, n_paths=2, rows=rows, slope=2.0,
        conservative=False, stopping_trend_monotone=True,
    )
    assert emit_plots(None, tmp_path, study=study) == [tmp_path / "mass_drift.png"]
