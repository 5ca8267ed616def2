"""Render BER curves with confidence bands from simulator result CSVs.

Input files are the long-format CSVs the simulation harness writes (one
row per scheme and sweep point, with Wilson interval bounds).  Renders
are deterministic: fixed style, fixed SVG id salt, no timestamps.
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

REQUIRED_COLUMNS = {"scheme", "axis", "value", "ber", "ci_lo", "ci_hi", "bits"}

AXIS_LABELS = {
    "snr_db": "SNR (dB)",
    "symbols": "symbol index",
    "users": "number of users",
    "group_size": "group size",
    "relays": "number of relays",
}


class PlotDataError(ValueError):
    """Raised for unusable inputs: missing columns, empty data, mismatched grids."""


@dataclass
class Series:
    label: str
    x: np.ndarray
    ber: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    bits: np.ndarray


@dataclass
class PlotSpec:
    """One figure: input CSVs, the sweep axis, and the output image path."""

    inputs: list
    axis: str
    out: Path
    log_ber: bool = True
    labels: list | None = None
    title: str | None = None

    def __post_init__(self):
        self.inputs = [Path(p) for p in self.inputs]
        self.out = Path(self.out)
        if self.axis not in AXIS_LABELS:
            raise PlotDataError(f"unknown axis {self.axis!r} (choose from {sorted(AXIS_LABELS)})")
        for p in self.inputs:
            if not p.exists():
                raise PlotDataError(f"input file not found: {p}")


def load_series(path: Path, axis: str) -> list:
    """All series in one CSV, in first-appearance order of the scheme column."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise PlotDataError(f"{path}: empty file")
        missing = REQUIRED_COLUMNS - set(reader.fieldnames)
        if missing:
            raise PlotDataError(f"{path}: missing columns {sorted(missing)}")
        rows = list(reader)
    if not rows:
        raise PlotDataError(f"{path}: no data rows")
    order = []
    grouped = {}
    for row in rows:
        if row["axis"] != axis:
            raise PlotDataError(f"{path}: row axis {row['axis']!r} does not match requested {axis!r}")
        key = row["scheme"]
        if key not in grouped:
            grouped[key] = []
            order.append(key)
        grouped[key].append(row)
    out = []
    for key in order:
        rs = sorted(grouped[key], key=lambda r: float(r["value"]))
        out.append(
            Series(
                label=key,
                x=np.array([float(r["value"]) for r in rs]),
                ber=np.array([float(r["ber"]) for r in rs]),
                lo=np.array([float(r["ci_lo"]) for r in rs]),
                hi=np.array([float(r["ci_hi"]) for r in rs]),
                bits=np.array([float(r["bits"]) for r in rs]),
            )
        )
    return out


def _floor(series_list) -> float:
    """Smallest representable BER: one error in the largest bit count."""
    total = max(float(s.bits.max()) for s in series_list)
    return 1.0 / max(total, 1.0)


def render(spec: PlotSpec) -> Path:
    """Render one figure; returns the output path.

    Raises PlotDataError (before writing anything) when inputs are
    unusable or the series' sweep grids disagree.
    """
    series = []
    for path in spec.inputs:
        series.extend(load_series(path, spec.axis))
    if spec.labels is not None:
        if len(spec.labels) != len(series):
            raise PlotDataError(f"{len(spec.labels)} labels for {len(series)} series")
        for s, lab in zip(series, spec.labels):
            s.label = lab
    grid = series[0].x
    for s in series[1:]:
        if len(s.x) != len(grid) or not np.allclose(s.x, grid):
            raise PlotDataError(f"sweep grids disagree: {s.label} vs {series[0].label}")

    floor = _floor(series)
    rc = {
        "svg.hashsalt": "berplot",  # deterministic element ids
        "svg.fonttype": "none",  # keep labels as text, not glyph paths
        "figure.figsize": (6.0, 4.2),
        "font.size": 10,
    }
    with plt.rc_context(rc):
        fig, ax = plt.subplots()
        for s in series:
            ber = np.maximum(s.ber, floor) if spec.log_ber else s.ber
            lo = np.maximum(s.lo, floor) if spec.log_ber else s.lo
            hi = np.maximum(s.hi, floor) if spec.log_ber else s.hi
            (line,) = ax.plot(s.x, ber, marker="o", markersize=3.5, linewidth=1.2, label=s.label)
            ax.fill_between(s.x, lo, hi, alpha=0.2, color=line.get_color(), linewidth=0)
        if spec.log_ber:
            ax.set_yscale("log")
        ax.set_xlabel(AXIS_LABELS[spec.axis])
        ax.set_ylabel("BER")
        if spec.title:
            ax.set_title(spec.title)
        ax.grid(True, which="both", alpha=0.3)
        ax.legend(loc="best")
        fig.tight_layout()
        spec.out.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(spec.out, format=spec.out.suffix.lstrip(".") or "svg", metadata=_no_date_metadata(spec.out))
        plt.close(fig)
    return spec.out


def _no_date_metadata(out: Path) -> dict:
    suffix = out.suffix.lower()
    if suffix == ".svg":
        return {"Date": None}
    if suffix == ".pdf":
        return {"CreationDate": None}
    return {}
