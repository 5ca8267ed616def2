import csv
import json

import numpy as np
import pytest

from coopcdma.config import NetworkConfig
from coopcdma.harness import (
    ExperimentSpec,
    ResultRecord,
    compare_schemes,
    packet_seed,
    run_experiment,
    run_point,
    wilson_interval,
)
from coopcdma.simulation import Scheme, parse_scheme, run_packet

CFG = NetworkConfig(K=3, N=8, L=2, n_r=1, P=120, N_tr=40, G=2).with_snr_db(8.0)


def _spec(tmp_path, **kw):
    base = dict(
        config=CFG,
        schemes=[parse_scheme("CIS-MMSE"), parse_scheme("NCIS-MMSE")],
        sweep="snr_db",
        values=[8.0],
        trials=3,
        seed=5,
        out_dir=str(tmp_path / "out"),
    )
    base.update(kw)
    return ExperimentSpec(**base)


class TestWilson:
    def test_known_value(self):
        lo, hi = wilson_interval(10, 100)
        # standard Wilson bounds for 10/100 at 95%
        assert lo == pytest.approx(0.0552, abs=2e-3)
        assert hi == pytest.approx(0.1744, abs=2e-3)

    def test_zero_errors_interval(self):
        lo, hi = wilson_interval(0, 1000)
        assert lo == 0.0
        assert 0 < hi < 0.01

    def test_empty_counts(self):
        assert wilson_interval(0, 0) == (0.0, 1.0)

    def test_halving_with_quadruple_samples(self):
        _, hi1 = wilson_interval(20, 10_000)
        _, hi4 = wilson_interval(80, 40_000)
        hw1 = hi1 - 20 / 10_000
        hw4 = hi4 - 80 / 40_000
        assert abs(hw4 / hw1 - 0.5) < 0.25


class TestRunPoint:
    def test_single_trial_reduces_to_run_packet(self, tmp_path):
        spec = _spec(tmp_path, trials=1)
        scheme = spec.schemes[0]
        rec, profile = run_point(spec, scheme, 0, 8.0)
        direct = run_packet(spec.config_at(8.0), scheme, packet_seed(spec.seed, 0, 0))
        assert rec.errors == direct.data_errors
        assert rec.bits == direct.data_bits
        assert np.array_equal(profile, direct.err_bits)

    def test_doubling_trials_shrinks_interval(self, tmp_path):
        cfg = CFG.with_snr_db(4.0)
        half = []
        for trials in (8, 16):
            spec = _spec(tmp_path, trials=trials, config=cfg)
            rec, _ = run_point(spec, spec.schemes[0], 0, 4.0)
            half.append(rec.half_width)
        ratio = half[1] / half[0]
        assert abs(ratio - 1 / np.sqrt(2)) < 0.25

    def test_paired_seeding_is_scheme_independent(self, tmp_path):
        spec = _spec(tmp_path)
        a = packet_seed(spec.seed, 0, 2)
        b = packet_seed(spec.seed, 0, 2)
        assert a.entropy == b.entropy

    def test_parallel_matches_serial(self, tmp_path):
        serial = _spec(tmp_path, trials=4, jobs=1)
        parallel = _spec(tmp_path, trials=4, jobs=2)
        r1, p1 = run_point(serial, serial.schemes[0], 0, 8.0)
        r2, p2 = run_point(parallel, parallel.schemes[0], 0, 8.0)
        assert r1.errors == r2.errors
        assert np.array_equal(p1, p2)


class TestRunExperiment:
    def test_outputs_written(self, tmp_path):
        spec = _spec(tmp_path, values=[6.0, 10.0])
        records = run_experiment(spec)
        out = tmp_path / "out"
        assert (out / "manifest.json").exists()
        assert (out / "results.csv").exists()
        assert (out / "merged.csv").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["trials"] == 3
        assert manifest["config"]["K"] == 3
        with open(out / "results.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == len(records) == 4
        bers = {(r["scheme"], float(r["value"])): float(r["ber"]) for r in rows}
        for rec in records:
            assert bers[(rec.scheme, rec.value)] == pytest.approx(rec.ber)

    def test_reproducible_records(self, tmp_path):
        spec1 = _spec(tmp_path / "a")
        spec2 = _spec(tmp_path / "b")
        rec1 = run_experiment(spec1)
        rec2 = run_experiment(spec2)
        for a, b in zip(rec1, rec2):
            assert a.errors == b.errors
            assert a.bits == b.bits

    def test_ber_nonincreasing_in_snr(self, tmp_path):
        spec = _spec(tmp_path, values=[0.0, 8.0, 16.0], trials=4, schemes=[parse_scheme("CIS-MMSE")])
        records = run_experiment(spec)
        bers = [r.ber for r in records]
        # allow confidence overlap: upper bound of the better point below lower of the worse
        for lo_snr, hi_snr in zip(records, records[1:]):
            assert hi_snr.ber <= lo_snr.ber or hi_snr.ci[0] <= lo_snr.ci[1]

    def test_users_sweep_changes_config(self, tmp_path):
        spec = _spec(tmp_path, sweep="users", values=[2, 3], trials=2)
        records = run_experiment(spec)
        assert len(records) == 4

    def test_symbols_sweep_bins(self, tmp_path):
        spec = _spec(tmp_path, sweep="symbols", values=[], trials=2, symbol_bin=30)
        records = run_experiment(spec)
        per_scheme = len(records) // len(spec.schemes)
        assert per_scheme == 4  # 120 symbols in bins of 30
        assert all(r.axis == "symbols" for r in records)

    def test_group_sweep_overrides_scheme(self, tmp_path):
        spec = _spec(
            tmp_path,
            sweep="group_size",
            values=[1, 2],
            trials=2,
            schemes=[parse_scheme("JPAIS-GBC-MMSE")],
        )
        records = run_experiment(spec)
        assert [r.value for r in records] == [1.0, 2.0]
        assert "G=1" in records[0].scheme or "G=None" not in records[0].scheme

    def test_invalid_spec_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            _spec(tmp_path, trials=0)
        with pytest.raises(ValueError):
            _spec(tmp_path, sweep="towers")
        with pytest.raises(ValueError):
            _spec(tmp_path, values=[])


class TestCompare:
    def test_identical_scheme_identical_curves(self, tmp_path):
        spec = _spec(tmp_path, schemes=[parse_scheme("CIS-MMSE"), parse_scheme("CIS-MMSE")])
        records, summary = compare_schemes(spec)
        assert records[0].errors == records[1].errors
        assert "snr_db=8" in summary.lines[0]

    def test_requires_two_schemes(self, tmp_path):
        spec = _spec(tmp_path, schemes=[parse_scheme("CIS-MMSE")])
        with pytest.raises(ValueError):
            compare_schemes(spec)

    def test_merged_csv_aligned(self, tmp_path):
        spec = _spec(tmp_path, values=[6.0, 12.0])
        compare_schemes(spec)
        with open(tmp_path / "out" / "merged.csv") as fh:
            rows = list(csv.reader(fh))
        header = rows[0]
        assert header[0] == "value"
        assert len(rows) == 3
        assert len(header) == 1 + 3 * len(spec.schemes)


def test_result_record_row_fields():
    rec = ResultRecord("X", "snr_db", 1.0, errors=5, bits=100, sym_errors=4, symbols=50, packets=2, wall_time_s=0.5)
    row = rec.row()
    assert row["ber"] == pytest.approx(0.05)
    assert row["ser"] == pytest.approx(0.08)
    assert row["ci_lo"] <= 0.05 <= row["ci_hi"]
