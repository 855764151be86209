"""
FILMLAB Plots — Static Figures

Rendered off-screen (Agg). A figure is only written when its data exists:
an empty report produces no files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from loguru import logger  # noqa: E402

from filmlab.ensemble import (  # noqa: E402
    EnsembleReport,
    MassStudyReport,
    RefinementRow,
)
from filmlab.governance import PersistError  # noqa: E402
from filmlab.scheme import PathRecord  # noqa: E402


def _save(fig, path: Path) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, dpi=120, bbox_inches="tight")
    except OSError as e:
        raise PersistError(f"cannot write plot {path}: {e}") from e
    finally:
        plt.close(fig)
    logger.debug(f"[PLOTS] Wrote {path}")
    return path


def plot_energy_entropy(records: list[PathRecord], path: Path) -> Path:
    fig, (ax_e, ax_s) = plt.subplots(1, 2, figsize=(10, 4))
    for rec in records:
        t = [d.time for d in rec.diagnostics]
        ax_e.plot(t, [d.energy for d in rec.diagnostics], lw=0.8)
        ax_s.plot(t, [d.entropy for d in rec.diagnostics], lw=0.8)
    ax_e.set(xlabel="t", ylabel="E_h", title="Energy")
    ax_s.set(xlabel="t", ylabel="S_h", title="Entropy")
    return _save(fig, path)


def plot_mass_drift(rows: list[RefinementRow], slope: float | None, path: Path) -> Path:
    hs = np.array([r.h for r in rows])
    drift = np.array([r.mass_drift for r in rows])
    fig, ax = plt.subplots(figsize=(5, 4))
    positive = drift > 0.0
    if positive.any():
        ax.loglog(hs[positive], drift[positive], "o-")
    ax.set(xlabel="h", ylabel="E[sup |mean u - mean u0|]", title="Mass drift")
    label = "conservative (drift below 1e-12)" if slope is None else f"slope = {slope:.3f}"
    ax.annotate(label, xy=(0.05, 0.9), xycoords="axes fraction")
    return _save(fig, path)


def plot_stopping_times(times: list[float], path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.hist(times, bins=min(20, max(1, len(times))))
    ax.set(xlabel="stopping time", ylabel="paths", title="Stopping times")
    return _save(fig, path)


def emit_plots(
    report: EnsembleReport | None,
    directory: Path,
    records: list[PathRecord] | None = None,
    study: MassStudyReport | None = None,
) -> list[Path]:
    directory = Path(directory)
    written: list[Path] = []
    if records:
        written.append(plot_energy_entropy(records, directory / "energy_entropy.png"))
    if study is not None and study.rows:
        written.append(plot_mass_drift(study.rows, study.slope, directory / "mass_drift.png"))
    if report is not None and report.stopping.times:
        written.append(plot_stopping_times(report.stopping.times, directory / "stopping_times.png"))
    logger.info(f"[PLOTS] {len(written)} figures in {directory}")
    return written
