"""Run reports: deterministic JSON, CSV plot data and atomic file output."""

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import UsageError

SCHEMA_VERSION = 1
PLOT_KINDS = ("trajectory", "band", "margin-sweep")


@dataclass
class PlotTable:
    """One CSV worth of plot data."""

    label: str
    header: tuple
    rows: np.ndarray = field(repr=False)


@dataclass
class RunReport:
    """``data`` is what lands in report.json; ``plots`` and ``timing`` stay outside it."""

    data: dict
    plots: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.data.get("status") == "pass"

    @property
    def failed_tasks(self):
        return list(self.data.get("failed_tasks", []))


def to_jsonable(obj):
    """Plain JSON types; non-finite floats become the strings ``inf``, ``-inf``, ``nan``."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating, Fraction)):
        v = float(obj)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj):
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def atomic_write(path, text):
    """Write via a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def csv_text(header, rows, prefix=None):
    """CSV with ``repr`` floats; ``prefix`` adds leading constant columns."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    pre_h = list(prefix) if prefix else []
    w.writerow(pre_h + list(header))
    pre_v = [str(v) for v in prefix.values()] if prefix else []
    for row in np.atleast_2d(rows):
        w.writerow(pre_v + [repr(float(v)) for v in row])
    return buf.getvalue()


def _combined(tables, key):
    """Stack several tables of one kind with a leading ``key`` column."""
    if not tables:
        return None
    header = (key,) + tables[0].header
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for tab in tables:
        for row in np.atleast_2d(tab.rows):
            w.writerow([tab.label] + [repr(float(v)) for v in row])
    return buf.getvalue()


def write_report(report, out_dir):
    """report.json, timing.json, trajectories.csv and sweep.csv when available."""
    out = Path(out_dir)
    written = [atomic_write(out / "report.json", dumps(report.data))]
    written.append(atomic_write(out / "timing.json", dumps(report.timing)))
    traj = _combined(report.plots.get("trajectory", []), "seed")
    if traj is not None:
        written.append(atomic_write(out / "trajectories.csv", traj))
    sweep = report.plots.get("margin-sweep", [])
    if sweep:
        written.append(atomic_write(out / "sweep.csv", csv_text(sweep[0].header, sweep[0].rows)))
    return written


def emit_plot_data(report, kind, out_dir):
    """Write the CSV files for one plot kind and return their paths.

    ``trajectory`` gives ``t, y1.., eta1.., drift`` per trajectory; ``band``
    gives ``t, abs_eta, lower, upper`` per certified record; ``margin-sweep``
    gives ``index, margin``.
    """
    if kind not in PLOT_KINDS:
        raise UsageError(f"unknown plot kind {kind!r}; choose from {PLOT_KINDS}")
    tables = report.plots.get(kind)
    if not tables:
        raise UsageError(f"report has no data for plot kind {kind!r}")
    out = Path(out_dir) / "plot-data"
    stem = kind.replace("-", "_")
    paths = []
    for tab in tables:
        name = f"{stem}.csv" if len(tables) == 1 else f"{stem}_{tab.label}.csv"
        paths.append(atomic_write(out / name, csv_text(tab.header, tab.rows)))
    return paths
