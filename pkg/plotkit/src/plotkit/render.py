"""Figure rendering for harness benchmark CSVs.

Reads only the raw per-trial rows and re-aggregates medians itself, so
figures stay correct regardless of how the harness aggregates. Two figure
kinds: per-parameter RMSE versus SNR (three panels) and average
positioning error versus the number of users (one panel).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

# raw-row schema shared with the harness (documented wire format)
REQUIRED_COLUMNS = (
    "method",
    "snr_db",
    "k",
    "trial",
    "rmse_azimuth",
    "rmse_elevation",
    "rmse_range",
    "positioning_error",
    "status",
)

FIGURE_KINDS = ("rmse-vs-snr", "error-vs-k")

METRICS = ("rmse_azimuth", "rmse_elevation", "rmse_range", "positioning_error")


class SchemaError(ValueError):
    """Input CSV does not carry the benchmark row schema."""


@dataclass(frozen=True)
class FigureSpec:
    csv_path: str
    kind: str
    out_path: str
    log_y: bool = False

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; expected {FIGURE_KINDS}")


def read_rows(csv_path):
    """Parse raw benchmark rows; validates the schema and non-emptiness."""
    path = Path(csv_path)
    if not path.exists():
        raise FileNotFoundError(f"input CSV not found: {csv_path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{csv_path}: empty file, no header row")
        missing = [c for c in REQUIRED_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise SchemaError(f"{csv_path}: missing required columns {missing}")
        rows = []
        for raw in reader:
            rows.append(
                {
                    "method": raw["method"],
                    "snr_db": float(raw["snr_db"]),
                    "k": int(raw["k"]),
                    "trial": int(raw["trial"]),
                    "status": raw["status"],
                    **{m: float(raw[m]) for m in METRICS},
                }
            )
    if not rows:
        raise SchemaError(f"{csv_path}: no data rows")
    return rows


def aggregate(rows):
    """Median and root-mean-square of each metric per (method, snr_db, k).

    Mirrors the harness aggregation over rows with status ok, in sorted
    group order.
    """
    groups: dict = {}
    for row in rows:
        if row["status"] != "ok":
            continue
        groups.setdefault((row["method"], row["snr_db"], row["k"]), []).append(row)
    out = []
    for (method, snr_db, k), members in sorted(groups.items()):
        entry = {"method": method, "snr_db": snr_db, "k": k, "n_trials": len(members)}
        for name in METRICS:
            vals = np.array([m[name] for m in members])
            entry[name + "_rms"] = float(np.sqrt(np.mean(vals**2)))
            entry[name + "_median"] = float(np.median(vals))
        out.append(entry)
    return out


def _style():
    # fixed cycle keeps output deterministic across environments
    return {
        "proposed": dict(color="#c1272d", marker="o"),
        "omp": dict(color="#0000a7", marker="s"),
        "music": dict(color="#008176", marker="^"),
    }


def _series(aggregated, x_key, y_key):
    methods = sorted({e["method"] for e in aggregated})
    series = {}
    for m in methods:
        pts = sorted((e[x_key], e[y_key]) for e in aggregated if e["method"] == m)
        series[m] = (np.array([p[0] for p in pts]), np.array([p[1] for p in pts]))
    return series


def render(spec: FigureSpec) -> str:
    """Render the figure for the spec; returns the output path."""
    rows = read_rows(spec.csv_path)
    aggregated = aggregate(rows)
    if not aggregated:
        raise SchemaError(f"{spec.csv_path}: no usable rows (all failed?)")
    styles = _style()

    if spec.kind == "rmse-vs-snr":
        panels = (
            ("rmse_azimuth_median", "azimuth RMSE (rad)"),
            ("rmse_elevation_median", "elevation RMSE (rad)"),
            ("rmse_range_median", "range RMSE (m)"),
        )
        fig, axes = plt.subplots(1, 3, figsize=(12.0, 3.6))
        for ax, (key, label) in zip(axes, panels):
            for method, (x, y) in _series(aggregated, "snr_db", key).items():
                ax.plot(x, y, label=method, **styles.get(method, {}))
            ax.set_xlabel("SNR (dB)")
            ax.set_ylabel(label)
            if spec.log_y:
                ax.set_yscale("log")
            ax.grid(True, alpha=0.3)
        axes[0].legend()
    else:
        fig, ax = plt.subplots(figsize=(4.6, 3.6))
        for method, (x, y) in _series(aggregated, "k", "positioning_error_median").items():
            ax.plot(x, y, label=method, **styles.get(method, {}))
        ax.set_xlabel("number of users")
        ax.set_ylabel("positioning error (m)")
        ax.set_xticks(sorted({e["k"] for e in aggregated}))
        if spec.log_y:
            ax.set_yscale("log")
        ax.grid(True, alpha=0.3)
        ax.legend()

    fig.tight_layout()
    out = Path(spec.out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    if out.suffix.lower() == ".svg":
        with matplotlib.rc_context({"svg.hashsalt": "plotkit"}):
            fig.savefig(out, metadata={"Date": None})
    else:
        fig.savefig(out, metadata={"Software": "plotkit"})
    plt.close(fig)
    return str(out)
