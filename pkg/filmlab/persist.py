"""
FILMLAB Persist — Report and Trajectory Files

Every run directory holds:
  - report.json        the EnsembleReport (no timestamps; identical inputs give identical bytes)
  - trajectories.csv   path, t, node, x, u for every sampled field
  - diagnostics.csv    one row per sampled time per path

Floats are written with 17 significant digits, so re-reading reproduces
the sampled values exactly.
"""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from pathlib import Path
from typing import Any, Iterable

import numpy as np
from loguru import logger
from pydantic import BaseModel

from filmlab.diagnostics.quantities import DiagnosticsRecord
from filmlab.ensemble import EnsembleReport
from filmlab.governance import PersistError
from filmlab.scheme import PathRecord

REPORT_FILE = "report.json"
TRAJECTORY_FILE = "trajectories.csv"
DIAGNOSTICS_FILE = "diagnostics.csv"
SCHEMA_FILE = "report.schema.json"

_DIAGNOSTIC_COLUMNS = ["path"] + list(DiagnosticsRecord.__dataclass_fields__)


def _fmt(value: float) -> str:
    return f"{value:.17g}"


def _ensure_dir(directory: Path) -> Path:
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise PersistError(f"cannot create output directory {directory}: {e}") from e
    return directory


def write_json(payload: BaseModel | dict[str, Any], path: Path) -> Path:
    """Write a model or plain dict as indented JSON."""
    _ensure_dir(path.parent)
    if isinstance(payload, BaseModel):
        text = payload.model_dump_json(indent=2)
    else:
        text = json.dumps(payload, indent=2, sort_keys=True)
    try:
        path.write_text(text + "\n")
    except OSError as e:
        raise PersistError(f"cannot write {path}: {e}") from e
    logger.debug(f"[PERSIST] Wrote {path}")
    return path


def _write_rows(path: Path, header: list[str], rows: Iterable[list[str]]) -> Path:
    try:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as e:
        raise PersistError(f"cannot write {path}: {e}") from e
    logger.debug(f"[PERSIST] Wrote {path}")
    return path


def _trajectory_rows(records: list[PathRecord]):
    for rec in records:
        for t, u in zip(rec.times, rec.fields):
            nodes = u.grid.nodes
            for k in range(u.grid.L_h):
                yield [str(rec.path_index), _fmt(t), str(k + 1), _fmt(nodes[k]), _fmt(u.values[k])]


def _diagnostic_rows(records: list[PathRecord]):
    for rec in records:
        for d in rec.diagnostics:
            row = d.as_row()
            yield [str(rec.path_index)] + [_fmt(row[name]) for name in _DIAGNOSTIC_COLUMNS[1:]]


def persist(report: EnsembleReport, directory: Path, records: list[PathRecord] | None = None) -> list[Path]:
    """Write report.json, and the CSV files when path records are available."""
    directory = _ensure_dir(Path(directory))
    written = [write_json(report, directory / REPORT_FILE)]
    records = sorted(records or [], key=lambda r: r.path_index)
    written.append(_write_rows(
        directory / TRAJECTORY_FILE, ["path", "t", "node", "x", "u"], _trajectory_rows(records)
    ))
    written.append(_write_rows(directory / DIAGNOSTICS_FILE, _DIAGNOSTIC_COLUMNS, _diagnostic_rows(records)))
    logger.info(f"[PERSIST] {len(written)} files in {directory}")
    return written


def export_schema(directory: Path) -> Path:
    return write_json(EnsembleReport.model_json_schema(), Path(directory) / SCHEMA_FILE)


# ---------------------------------------------------------------------------
# Reading back
# ---------------------------------------------------------------------------

def read_report(path: Path) -> EnsembleReport:
    try:
        return EnsembleReport.model_validate_json(Path(path).read_text())
    except OSError as e:
        raise PersistError(f"cannot read {path}: {e}") from e


def read_trajectories(path: Path) -> dict[int, tuple[list[float], list[np.ndarray]]]:
    """{path index: (times, nodal arrays)} in file order."""
    grouped: dict[int, dict[float, list[float]]] = defaultdict(dict)
    try:
        with open(path, newline="") as f:
            for row in csv.DictReader(f):
                samples = grouped[int(row["path"])]
                samples.setdefault(float(row["t"]), []).append(float(row["u"]))
    except (OSError, KeyError, ValueError) as e:
        raise PersistError(f"cannot read trajectories from {path}: {e}") from e

    out = {}
    for index, samples in grouped.items():
        times = list(samples)
        out[index] = (times, [np.array(samples[t]) for t in times])
    return out
