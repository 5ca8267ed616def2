import json
from pathlib import Path

import pytest

from coopcdma.cli import load_experiment, main

CONFIG_INI = """
[network]
K = 3
N = 8
L = 2
n_r = 1
P = 120
N_tr = 40
G = 2
sigma2 = 0.1

[experiment]
schemes = CIS-MMSE, NCIS-MMSE
sweep = snr_db
values = 6, 10
trials = 2
seed = 3
"""


@pytest.fixture
def ini(tmp_path):
    path = tmp_path / "exp.ini"
    path.write_text(CONFIG_INI)
    return path


def test_load_experiment_from_ini(ini, tmp_path):
    spec = load_experiment(str(ini), {"experiment.out": str(tmp_path / "o")})
    assert spec.config.K == 3
    assert spec.config.N_tr == 40
    assert [s.label for s in spec.schemes] == ["CIS-MMSE", "NCIS-MMSE"]
    assert spec.values == [6.0, 10.0]
    assert spec.trials == 2


def test_dotted_overrides(ini, tmp_path):
    spec = load_experiment(
        str(ini),
        {"network.K": "4", "experiment.trials": "5", "experiment.out": str(tmp_path / "o")},
    )
    assert spec.config.K == 4
    assert spec.trials == 5


def test_unknown_keys_rejected(ini):
    with pytest.raises(ValueError):
        load_experiment(str(ini), {"network.bogus": "1"})
    with pytest.raises(ValueError):
        load_experiment(str(ini), {"experiment.bogus": "1"})
    with pytest.raises(ValueError):
        load_experiment(str(ini), {"other.K": "1"})


def test_run_command(ini, tmp_path, capsys):
    out = tmp_path / "results"
    code = main(["run", "--config", str(ini), "--out", str(out), "--trials", "2", "--seed", "7"])
    assert code == 0
    assert (out / "results.csv").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 7
    text = capsys.readouterr().out
    assert "BER=" in text


def test_compare_command(ini, tmp_path, capsys):
    out = tmp_path / "cmp"
    code = main(["compare", "--config", str(ini), "--out", str(out)])
    assert code == 0
    assert (out / "merged.csv").exists()
    assert "<" in capsys.readouterr().out


def test_invalid_config_exit_code(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[network]\nK = 0\n")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "x")]) == 1


def test_missing_config_file_exit_code(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.ini")]) == 1


def test_malformed_set_exit_code(ini, tmp_path):
    assert main(["run", "--config", str(ini), "--set", "nonsense", "--out", str(tmp_path / "y")]) == 1


def test_set_overrides_apply(ini, tmp_path):
    out = tmp_path / "z"
    code = main(["run", "--config", str(ini), "--set", "experiment.values=12", "--out", str(out), "--trials", "1"])
    assert code == 0
    rows = (out / "results.csv").read_text().strip().splitlines()
    assert len(rows) == 1 + 2  # header + one sweep point per scheme


def test_selftest_command():
    assert main(["selftest"]) == 0


def test_dump_fixtures(tmp_path, capsys):
    out = tmp_path / "fx"
    code = main(["dump-fixtures", "--out", str(out), "--seed", "2"])
    assert code == 0
    assert (out / "codes.txt").exists()
    assert (out / "channels.csv").exists()
    assert (out / "comparison" / "merged.csv").exists()
