"""Record export (CSV, JSON) and SVG charts."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

from .runner import RECORD_FIELDS, TIMING_FIELDS, RunRecord, summarize

_INT_FIELDS = {"seed", "n_learners", "n_orchestrators"}
_FLOAT_FIELDS = {"alpha", "t_max", "energy_j", "u_total", "accuracy_proxy", "objective", "wall_ms"}


def _cell_text(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(float(value))  # shortest round-trip form
    return str(value)


def records_to_csv(records, drop=()) -> str:
    names = [f for f in RECORD_FIELDS if f not in drop]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")  # RFC 4180
    w.writerow(names)
    for r in records:
        row = r.__dict__
        w.writerow([_cell_text(row[n]) for n in names])
    return buf.getvalue()


def _parse(name, text):
    if name in _INT_FIELDS:
        return int(text)
    if name in _FLOAT_FIELDS:
        return float(text)
    if name == "feasible":
        return text == "true"
    return text


def records_from_csv(text: str) -> list:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != RECORD_FIELDS:
        raise ValueError("CSV header does not match the run-record columns")
    return [RunRecord(**{k: _parse(k, v) for k, v in row.items()}) for row in reader]


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)  # 'nan', 'inf'
    return value


def records_to_json(records) -> str:
    rows = [{k: _json_safe(v) for k, v in r.__dict__.items()} for r in records]
    return json.dumps(rows, indent=2) + "\n"


def records_from_json(text: str) -> list:
    out = []
    for row in json.loads(text):
        fixed = {k: (float(v) if k in _FLOAT_FIELDS else v) for k, v in row.items()}
        out.append(RunRecord(**fixed))
    return out


def export(records, path, fmt=None) -> Path:
    records = list(records)
    if not records:
        raise ValueError("nothing to export")
    path = Path(path)
    fmt = fmt or ("json" if path.suffix.lower() == ".json" else "csv")
    if fmt == "csv":
        path.write_text(records_to_csv(records), newline="")
    elif fmt == "json":
        path.write_text(records_to_json(records))
    else:
        raise ValueError(f"unknown export format {fmt!r}")
    return path


def load_records(path) -> list:
    path = Path(path)
    with open(path, newline="") as fh:
        text = fh.read()
    return records_from_json(text) if path.suffix.lower() == ".json" else records_from_csv(text)


def strip_timing(csv_text: str) -> str:
    """CSV with the wall-time columns removed, for determinism checks."""
    return records_to_csv(records_from_csv(csv_text), drop=TIMING_FIELDS)


# ---------------------------------------------------------------- charts

_SWEEP_KEYS = {
    "learners": lambda r: r.n_learners,
    "orchestrators": lambda r: r.n_orchestrators,
    "T_max": lambda r: r.t_max,
    "alpha": lambda r: r.alpha,
}


def detect_axis(records) -> str:
    ok = [r for r in records if not r.error]
    for axis, key in _SWEEP_KEYS.items():
        if len({key(r) for r in ok}) > 1:
            return axis
    return "alpha"


def plot_svg(records, kind: str, out, axis=None) -> Path:
    """Line charts of a sweep (energy and accuracy proxy against the axis)
    or a Pareto chart (U against energy). Each method line carries the SVG
    id ``<kind>-<method>``."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    records = list(records)
    if not records:
        raise ValueError("nothing to plot")
    plt.rcParams["svg.hashsalt"] = "melopt"
    if kind == "pareto":
        cells = summarize(records, key=lambda r: r.alpha)
        fig, ax = plt.subplots(figsize=(5, 4))
        for method in sorted({c.method for c in cells}):
            pts = sorted((c for c in cells if c.method == method), key=lambda c: c.energy_mean)
            (line,) = ax.plot([c.energy_mean for c in pts], [c.u_mean for c in pts], marker="o", label=method)
            line.set_gid(f"pareto-{method}")
        ax.set_xlabel("energy (J)")
        ax.set_ylabel("U (lower is better)")
    elif kind == "sweep":
        axis = axis or detect_axis(records)
        key = _SWEEP_KEYS[axis]
        cells = summarize(records, key=key)
        fig, (ax_e, ax_a) = plt.subplots(1, 2, figsize=(9, 4))
        for method in sorted({c.method for c in cells}):
            pts = sorted((c for c in cells if c.method == method), key=lambda c: c.value)
            xs = [c.value for c in pts]
            (le,) = ax_e.plot(xs, [c.energy_mean for c in pts], marker="o", label=method)
            (la,) = ax_a.plot(xs, [1.0 / c.u_mean for c in pts], marker="o", label=method)
            le.set_gid(f"sweep-energy-{method}")
            la.set_gid(f"sweep-accuracy-{method}")
        ax_e.set_xlabel(axis)
        ax_a.set_xlabel(axis)
        ax_e.set_ylabel("energy (J)")
        ax_a.set_ylabel("accuracy proxy 1/U")
        ax = ax_a
    else:
        raise ValueError(f"unknown chart kind {kind!r}")
    ax.legend()
    fig.tight_layout()
    out = Path(out)
    fig.savefig(out, format="svg", metadata={"Date": None})
    plt.close(fig)
    return out
