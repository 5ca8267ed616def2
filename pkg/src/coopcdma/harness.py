"""Experiment orchestration: sweeps, Monte-Carlo averaging, persistence.

Packets are seeded from (master seed, sweep index, packet index) only, so
every scheme at a sweep point runs on common channels, symbols and noise
and comparisons are paired.  Aggregation is an ordered reduction over
packet indices, independent of completion order.
"""

import csv
import dataclasses
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import NetworkConfig
from .simulation import PacketResult, Scheme, run_packet

SWEEP_AXES = ("snr_db", "users", "relays", "group_size", "symbols")


def wilson_interval(errors: int, total: int, z: float = 1.959963984540054):
    """95% Wilson score interval for an error proportion."""
    if total == 0:
        return 0.0, 1.0
    phat = errors / total
    denom = 1.0 + z * z / total
    center = (phat + z * z / (2 * total)) / denom
    half = (z / denom) * np.sqrt(phat * (1 - phat) / total + z * z / (4 * total * total))
    lo = 0.0 if errors == 0 else max(0.0, center - half)
    hi = 1.0 if errors == total else min(1.0, center + half)
    return lo, hi


@dataclass
class ResultRecord:
    """Aggregated errors of one scheme at one sweep point."""

    scheme: str
    axis: str
    value: float
    errors: int
    bits: int
    sym_errors: int
    symbols: int
    packets: int
    wall_time_s: float

    @property
    def ber(self) -> float:
        return self.errors / self.bits if self.bits else 0.0

    @property
    def ser(self) -> float:
        return self.sym_errors / self.symbols if self.symbols else 0.0

    @property
    def ci(self):
        return wilson_interval(self.errors, self.bits)

    @property
    def half_width(self) -> float:
        lo, hi = self.ci
        return 0.5 * (hi - lo)

    def row(self) -> dict:
        lo, hi = self.ci
        return {
            "scheme": self.scheme,
            "axis": self.axis,
            "value": self.value,
            "ber": self.ber,
            "ci_lo": lo,
            "ci_hi": hi,
            "half_width": self.half_width,
            "ser": self.ser,
            "errors": self.errors,
            "bits": self.bits,
            "packets": self.packets,
            "wall_time_s": round(self.wall_time_s, 3),
        }


CSV_FIELDS = ["scheme", "axis", "value", "ber", "ci_lo", "ci_hi", "half_width", "ser", "errors", "bits", "packets", "wall_time_s"]


@dataclass
class ExperimentSpec:
    """One experiment: base scenario, schemes, sweep axis and trial budget."""

    config: NetworkConfig
    schemes: list
    sweep: str = "snr_db"
    values: list = field(default_factory=lambda: [12.0])
    trials: int = 200
    seed: int = 1
    out_dir: str = "results"
    lognormal_db: float = 3.0
    genie_relays: bool = False
    jobs: int = 1
    symbol_bin: int = 50

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.sweep not in SWEEP_AXES:
            raise ValueError(f"unknown sweep axis {self.sweep!r} (choose from {SWEEP_AXES})")
        if self.sweep != "symbols" and not self.values:
            raise ValueError("sweep values must be non-empty")

    def config_at(self, value) -> NetworkConfig:
        cfg = self.config
        if self.sweep == "snr_db":
            return cfg.with_snr_db(float(value))
        if self.sweep == "users":
            return cfg.replace(K=int(value))
        if self.sweep == "relays":
            return cfg.replace(n_r=int(value))
        return cfg

    def scheme_at(self, scheme: Scheme, value) -> Scheme:
        if self.sweep == "group_size" and scheme.allocates_power:
            return dataclasses.replace(scheme, group_size=int(value))
        return scheme


def packet_seed(master: int, sweep_index: int, packet_index: int) -> np.random.SeedSequence:
    """Scheme-independent packet seed, so scheme comparisons are paired."""
    return np.random.SeedSequence(entropy=(int(master), int(sweep_index), int(packet_index)))


def _packet_worker(args):
    cfg, scheme, master, sweep_index, packet_index, genie, lognormal_db = args
    res = run_packet(cfg, scheme, packet_seed(master, sweep_index, packet_index), genie_relays=genie, lognormal_db=lognormal_db)
    # keep only what aggregation needs; diagnostics stay in-process
    return packet_index, res.err_bits, res.err_syms, res.bits_per_symbol, res.n_train


def run_point(spec: ExperimentSpec, scheme: Scheme, sweep_index: int, value) -> tuple[ResultRecord, np.ndarray]:
    """All packets of one scheme at one sweep point.

    Returns the aggregated record plus the per-symbol error profile
    (summed over packets) used by symbol-axis reports.
    """
    cfg = spec.config_at(value)
    sch = spec.scheme_at(scheme, value)
    t0 = time.perf_counter()
    jobs = [(cfg, sch, spec.seed, sweep_index, p, spec.genie_relays, spec.lognormal_db) for p in range(spec.trials)]
    outputs = {}
    if spec.jobs > 1:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            for pkt, errb, errs, bps, ntr in pool.map(_packet_worker, jobs, chunksize=4):
                outputs[pkt] = (errb, errs, bps, ntr)
    else:
        for job in jobs:
            pkt, errb, errs, bps, ntr = _packet_worker(job)
            outputs[pkt] = (errb, errs, bps, ntr)
    profile = None
    errors = sym_errors = 0
    bps = ntr = 0
    for p in range(spec.trials):  # fixed reduction order
        errb, errs, bps, ntr = outputs[p]
        profile = errb.astype(np.int64) if profile is None else profile + errb
        errors += int(errb[ntr:].sum())
        sym_errors += int(errs[ntr:].sum())
    P = len(profile)
    K2 = bps
    rec = ResultRecord(
        scheme=sch.label,
        axis=spec.sweep,
        value=float(value),
        errors=errors,
        bits=(P - ntr) * K2 * spec.trials,
        sym_errors=sym_errors,
        symbols=(P - ntr) * (K2 // 2) * spec.trials,
        packets=spec.trials,
        wall_time_s=time.perf_counter() - t0,
    )
    return rec, profile


def _symbol_records(spec: ExperimentSpec, scheme_label: str, profile: np.ndarray, wall: float) -> list:
    """Bin a per-symbol error profile into symbol-axis records."""
    P = len(profile)
    cfg = spec.config
    bits_per_symbol = 2 * cfg.K * spec.trials
    out = []
    width = max(1, int(spec.symbol_bin))
    for start in range(0, P, width):
        stop = min(start + width, P)
        errs = int(profile[start:stop].sum())
        bits = (stop - start) * bits_per_symbol
        out.append(
            ResultRecord(
                scheme=scheme_label,
                axis="symbols",
                value=float(start + (stop - start) // 2),
                errors=errs,
                bits=bits,
                sym_errors=0,
                symbols=0,
                packets=spec.trials,
                wall_time_s=wall,
            )
        )
    return out


def _scheme_file(out_dir: Path, label: str) -> Path:
    safe = label.replace("/", "-").replace(" ", "").replace("(", "_").replace(")", "").replace("=", "")
    return out_dir / f"{safe}.csv"


def _write_rows(path: Path, rows, append=False) -> None:
    mode = "a" if append and path.exists() else "w"
    with open(path, mode, newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        if mode == "w":
            w.writeheader()
        for r in rows:
            w.writerow(r.row())


def write_manifest(spec: ExperimentSpec, out_dir: Path) -> Path:
    from . import __version__

    manifest = {
        "version": __version__,
        "config": dataclasses.asdict(spec.config),
        "schemes": [s.label for s in spec.schemes],
        "sweep": spec.sweep,
        "values": [float(v) for v in spec.values],
        "trials": spec.trials,
        "seed": spec.seed,
        "lognormal_db": spec.lognormal_db,
        "genie_relays": spec.genie_relays,
        "symbol_bin": spec.symbol_bin,
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def run_experiment(spec: ExperimentSpec) -> list:
    """Run the sweep for every scheme, persist CSVs and a manifest.

    Partial results are flushed per sweep point, so an interrupted run
    leaves valid files behind.
    """
    out_dir = Path(spec.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_manifest(spec, out_dir)
    records = []
    if spec.sweep == "symbols":
        for scheme in spec.schemes:
            rec, profile = run_point(spec, scheme, 0, 0.0)
            rows = _symbol_records(spec, rec.scheme, profile, rec.wall_time_s)
            _write_rows(_scheme_file(out_dir, rec.scheme), rows)
            records.extend(rows)
        _write_rows(out_dir / "results.csv", records)
        return records
    per_scheme_rows = {s.label: [] for s in spec.schemes}
    try:
        for si, value in enumerate(spec.values):
            for scheme in spec.schemes:
                rec, _ = run_point(spec, scheme, si, value)
                records.append(rec)
                label = scheme.label
                per_scheme_rows[label].append(rec)
                _write_rows(_scheme_file(out_dir, label), [rec], append=True)
    finally:
        _write_rows(out_dir / "results.csv", records)
        _write_merged(out_dir, spec, records)
    return records


def _write_merged(out_dir: Path, spec: ExperimentSpec, records) -> None:
    """Wide-format CSV: one row per sweep value, one BER/CI triple per scheme."""
    by_value = {}
    labels = []
    for r in records:
        if r.scheme not in labels:
            labels.append(r.scheme)
        by_value.setdefault(r.value, {})[r.scheme] = r
    cols = ["value"]
    for lab in labels:
        cols += [f"{lab}:ber", f"{lab}:ci_lo", f"{lab}:ci_hi"]
    with open(out_dir / "merged.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for value in sorted(by_value):
            row = [value]
            for lab in labels:
                r = by_value[value].get(lab)
                if r is None:
                    row += ["", "", ""]
                else:
                    lo, hi = r.ci
                    row += [r.ber, lo, hi]
            w.writerow(row)


@dataclass
class ComparisonSummary:
    """Pairwise ordering of schemes at each sweep point with significance flags."""

    lines: list

    def __str__(self):
        return "\n".join(self.lines)


def compare_schemes(spec: ExperimentSpec) -> tuple[list, ComparisonSummary]:
    """Run >= 2 schemes on an aligned sweep grid and summarize the ordering."""
    if len(spec.schemes) < 2:
        raise ValueError("compare_schemes needs at least two schemes")
    records = run_experiment(spec)
    by_value = {}
    for r in records:
        by_value.setdefault(r.value, []).append(r)
    lines = []
    for value in sorted(by_value):
        recs = sorted(by_value[value], key=lambda r: r.ber)
        parts = []
        for a, b in zip(recs, recs[1:]):
            lo_a, hi_a = a.ci
            lo_b, hi_b = b.ci
            sig = "<" if hi_a < lo_b else "<?"
            parts.append(f"{a.scheme} ({a.ber:.3e}) {sig} ")
        last = recs[-1]
        lines.append(f"{spec.sweep}={value:g}: " + "".join(parts) + f"{last.scheme} ({last.ber:.3e})")
    return records, ComparisonSummary(lines=lines)
