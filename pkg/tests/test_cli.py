import json

import pytest

from irsdoa.cli import cli

CONFIG_TEXT = """
[scenario]
n_elements = 16
n_measurements = 16
angles_deg = -20.0, 15.0
snr_db = 25

[experiment]
methods = omp
sweep = none
trials = 2
base_seed = 11

[solver]
sparsity = 30
max_iters = 300

[output]
format = csv
include_timing = false
"""


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text(CONFIG_TEXT)
    return str(path)


def test_unknown_subcommand_exits_1(capsys):
    assert cli(["frobnicate"]) == 1
    assert "usage" in capsys.readouterr().err.lower()


def test_no_subcommand_exits_1(capsys):
    assert cli([]) == 1


def test_unknown_flag_exits_1(config_path, capsys):
    assert cli(["sweep", "--config", config_path, "--wat"]) == 1


def test_missing_config_exits_1(tmp_path, capsys):
    assert cli(["sweep", "--config", str(tmp_path / "nope.cfg"),
                "--out", str(tmp_path / "o.csv")]) == 1


def test_bad_config_exits_1(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("[scenario]\nn_elements = 16\nbogus_key = 1\n")
    assert cli(["sweep", "--config", str(path),
                "--out", str(tmp_path / "o.csv")]) == 1
    assert "bogus_key" in capsys.readouterr().err


def test_estimate_prints_sorted_angles(config_path, capsys):
    assert cli(["estimate", "--config", config_path, "--method", "omp"]) == 0
    lines = capsys.readouterr().out.strip().split("\n")
    values = [float(v) for v in lines]
    assert values == sorted(values)
    assert len(values) == 2


def test_estimate_seed_flag_changes_draws(config_path, capsys):
    cli(["estimate", "--config", config_path, "--method", "omp", "--seed", "1"])
    first = capsys.readouterr().out
    cli(["estimate", "--config", config_path, "--method", "omp", "--seed", "1"])
    again = capsys.readouterr().out
    assert first == again


def test_sweep_writes_csv(config_path, tmp_path, capsys):
    out = tmp_path / "results.csv"
    assert cli(["sweep", "--config", config_path, "--out", str(out)]) == 0
    lines = out.read_text().strip().split("\n")
    assert lines[0].startswith("axis_name,axis_value,method")
    assert len(lines) == 2  # one point, one method


def test_sweep_byte_identical_reruns(config_path, tmp_path):
    out1 = tmp_path / "r1.csv"
    out2 = tmp_path / "r2.csv"
    assert cli(["sweep", "--config", config_path, "--out", str(out1)]) == 0
    assert cli(["sweep", "--config", config_path, "--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_simulate_schema(config_path, tmp_path):
    out = tmp_path / "signals.jsonl"
    assert cli(["simulate", "--config", config_path, "--out", str(out)]) == 0
    lines = out.read_text().strip().split("\n")
    assert len(lines) == 2
    rec = json.loads(lines[0])
    assert set(rec) == {"seed", "y_re", "y_im", "sigma2", "config_hash"}


def test_crlb_subcommand(config_path, tmp_path):
    out = tmp_path / "bounds.csv"
    assert cli(["crlb", "--config", config_path, "--out", str(out)]) == 0
    lines = out.read_text().strip().split("\n")
    assert lines[0].startswith("axis_name,axis_value,angle_index")
    assert len(lines) == 3  # header + one row per source angle


def test_selftest_passes(capsys):
    assert cli(["selftest", "--seed", "3"]) == 0
    out = capsys.readouterr().out
    assert "0 failed" in out
