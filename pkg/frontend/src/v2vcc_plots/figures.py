"""Offline figure generation from the simulator's CSV artifacts.

The plotter never touches simulator internals: its only inputs are
``sessions.csv`` and ``summary.csv`` files in the documented schemas.
Extraction (``extract``) is split from drawing (``render``) so tests can
validate that the plotted series equal the CSV values exactly.

Figure kinds:

- ``phase_box``     one sessions.csv -> box plot per phase plus total;
- ``scaling_line``  several sessions.csv -> mean total vs consumer count;
- ``ip_bars``       one file per scenario -> mean total bar each;
- ``loss_bars``     one file per scenario -> mean total bar each
                    (loss sweep next to the centralized best case).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

KINDS = ("phase_box", "scaling_line", "ip_bars", "loss_bars")
PHASES = ("discovery", "verification", "negotiation", "coordination",
          "confirmation")

SESSIONS_COLUMNS = ("scenario_id", "seed", "cid", "pid", "outcome",
                    "discovery_ms", "verification_ms", "negotiation_ms",
                    "coordination_ms", "confirmation_ms", "total_ms",
                    "price", "amount_kwh", "meet_x", "meet_y", "rounds")
SUMMARY_COLUMNS = ("phase", "mean", "min", "q1", "median", "q3", "max")


class SchemaError(Exception):
    """An input CSV is missing a required column (or is not a known schema)."""


class EmptyInput(Exception):
    """An input CSV holds no usable data rows."""


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    inputs: tuple[str, ...]
    out_path: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; "
                             f"expected one of {', '.join(KINDS)}")
        if not self.inputs:
            raise ValueError("at least one input CSV is required")


@dataclass
class Series:
    """One plotted data series: a label plus parallel x/y values.

    Box-plot series carry the raw sample values in ``y`` with ``x`` empty.
    """

    label: str
    x: list = field(default_factory=list)
    y: list = field(default_factory=list)


@dataclass
class FigureData:
    kind: str
    series: list[Series]
    x_label: str
    y_label: str = "time (ms)"


# ---------------------------------------------------------------------------
# CSV loading and validation
# ---------------------------------------------------------------------------

def _read_rows(path) -> tuple[list[str], list[dict]]:
    p = Path(path)
    if not p.exists():
        raise SchemaError(f"{p}: no such file")
    with p.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        rows = list(reader)
    return header, rows


def _require_columns(path, header, required) -> None:
    missing = [c for c in required if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")


def load_sessions(path) -> list[dict]:
    """Rows of a sessions.csv, schema-checked."""
    header, rows = _read_rows(path)
    _require_columns(path, header, SESSIONS_COLUMNS)
    if not rows:
        raise EmptyInput(f"{path}: no session rows")
    return rows


def load_summary(path) -> dict[str, dict[str, float]]:
    """summary.csv as {phase: {statistic: value}}, schema-checked."""
    header, rows = _read_rows(path)
    _require_columns(path, header, SUMMARY_COLUMNS)
    if not rows:
        raise EmptyInput(f"{path}: no summary rows")
    return {r["phase"]: {k: float(r[k]) for k in SUMMARY_COLUMNS[1:]}
            for r in rows}


def _is_summary(path) -> bool:
    header, _ = _read_rows(path)
    return header[:2] == ["phase", "mean"]


def _totals(rows, path) -> list[float]:
    values = [float(r["total_ms"]) for r in rows if r["total_ms"]]
    if not values:
        raise EmptyInput(f"{path}: no completed sessions (empty total_ms)")
    return values


def _scenario_label(path, rows=None) -> str:
    if rows:
        ids = {r["scenario_id"] for r in rows if r["scenario_id"]}
        if len(ids) == 1:
            return ids.pop()
    # summary.csv carries no id column; the harness writes one directory
    # per scenario, so fall back to the directory name.
    return Path(path).resolve().parent.name


def _mean_total(path) -> tuple[str, float]:
    if _is_summary(path):
        summary = load_summary(path)
        if "total" not in summary:
            raise SchemaError(f"{path}: summary lacks a 'total' row")
        return _scenario_label(path), summary["total"]["mean"]
    rows = load_sessions(path)
    values = _totals(rows, path)
    return _scenario_label(path, rows), sum(values) / len(values)


# ---------------------------------------------------------------------------
# Extraction: the pure data model behind each figure
# ---------------------------------------------------------------------------

def _extract_phase_box(spec: FigureSpec) -> FigureData:
    if len(spec.inputs) != 1:
        raise ValueError("phase_box takes exactly one sessions.csv")
    path = spec.inputs[0]
    rows = load_sessions(path)
    series = []
    for phase in PHASES:
        col = f"{phase}_ms"
        values = [float(r[col]) for r in rows if r[col]]
        series.append(Series(label=phase, y=values))
    series.append(Series(label="total", y=_totals(rows, path)))
    return FigureData(kind=spec.kind, series=series,
                      x_label=_scenario_label(path, rows))


def _extract_scaling_line(spec: FigureSpec) -> FigureData:
    points = []
    for path in spec.inputs:
        rows = load_sessions(path)
        consumers = len({r["cid"] for r in rows})
        values = _totals(rows, path)
        points.append((consumers, sum(values) / len(values)))
    points.sort()
    return FigureData(kind=spec.kind,
                      series=[Series(label="mean total",
                                     x=[p[0] for p in points],
                                     y=[p[1] for p in points])],
                      x_label="concurrent consumers")


def _extract_bars(spec: FigureSpec, x_label: str) -> FigureData:
    series = [Series(label=label, y=[mean])
              for label, mean in (_mean_total(p) for p in spec.inputs)]
    return FigureData(kind=spec.kind, series=series, x_label=x_label)


def extract(spec: FigureSpec) -> FigureData:
    """The exact data a figure will plot, straight from the CSVs."""
    if spec.kind == "phase_box":
        return _extract_phase_box(spec)
    if spec.kind == "scaling_line":
        return _extract_scaling_line(spec)
    if spec.kind == "ip_bars":
        return _extract_bars(spec, "coordinator delay scenario")
    return _extract_bars(spec, "loss scenario")


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def render(spec: FigureSpec) -> Path:
    """Draw the figure described by ``spec`` and write it to disk."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    data = extract(spec)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    try:
        if data.kind == "phase_box":
            ax.boxplot([s.y for s in data.series],
                       tick_labels=[s.label for s in data.series],
                       whis=(0, 100))
            ax.set_title(f"Phase completion times ({data.x_label})")
        elif data.kind == "scaling_line":
            line = data.series[0]
            ax.plot(line.x, line.y, marker="o", label=line.label)
            ax.set_xlabel(data.x_label)
            ax.legend()
            ax.set_title("Total completion time vs concurrency")
        else:
            labels = [s.label for s in data.series]
            ax.bar(range(len(labels)), [s.y[0] for s in data.series],
                   tick_label=labels)
            ax.set_xlabel(data.x_label)
            ax.set_title("Mean total completion time")
        ax.set_ylabel(data.y_label)
        out = Path(spec.out_path)
        out.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(out)
    finally:
        plt.close(fig)
    return out
