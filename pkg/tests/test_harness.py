import io
import json

import numpy as np
import pytest

from irsdoa import (ExperimentConfig, SolverConfig, TrialRecord, dump_signals,
                    emit_results, load_config, match_estimates, parse_results,
                    reconstruction_probability, rmse, run_experiment, run_trial)
from irsdoa.config import ConfigError
from irsdoa.harness import MISSING_PENALTY_DEG, SweepResult


def record(errors, success=True, method="ncanm", trial=0):
    return TrialRecord(trial=trial, seed=trial, method=method,
                       estimated_deg=(), truth_deg=(0.0,) * len(errors),
                       errors_deg=tuple(errors), success=success,
                       wall_time=1e-3, iterations=10)


# ------------------------------------------------------------------ matching

def test_match_exact():
    assert match_estimates([1.0, 2.0], [2.0, 1.0]) == [0.0, 0.0]


def test_match_missing_penalized():
    errs = match_estimates([-30.0, 12.5, 20.0], [12.4])
    assert sorted(errs)[0] == pytest.approx(0.1)
    assert errs.count(MISSING_PENALTY_DEG) == 2


def test_match_empty_estimates():
    assert match_estimates([1.0, 2.0], []) == [100.0, 100.0]


def test_match_extra_estimates_ignored():
    errs = match_estimates([10.0], [9.9, 44.0, -3.0])
    assert errs == [pytest.approx(0.1)]


def test_match_optimal_assignment():
    # greedy nearest would pair 10->10.4 and strand 10.6; optimal swaps
    errs = match_estimates([10.0, 10.5], [10.4, 10.6])
    assert sum(errs) == pytest.approx(0.5)


# ---------------------------------------------------------------------- rmse

def test_rmse_zero_for_exact():
    assert rmse([record([0.0, 0.0, 0.0])]) == 0.0


def test_rmse_single_trial_value():
    # per-source errors 0.25, 0.21, 0.04 pool to about 0.190
    value = rmse([record([0.25, 0.21, 0.04])])
    assert value == pytest.approx(0.190, abs=5e-4)


def test_rmse_matches_scalar_oracle():
    rng = np.random.default_rng(0)
    records = [record(rng.uniform(0, 2, 3), trial=t) for t in range(7)]
    total, count = 0.0, 0
    for rec in records:
        for e in rec.errors_deg:
            total += e * e
            count += 1
    assert rmse(records) == pytest.approx(np.sqrt(total / count), rel=1e-12)


def test_rmse_pooling_equals_concatenation():
    rng = np.random.default_rng(1)
    part_a = [record(rng.uniform(0, 1, 3), trial=t) for t in range(4)]
    part_b = [record(rng.uniform(0, 1, 3), trial=t) for t in range(6)]
    pooled = rmse(part_a + part_b)
    manual = np.sqrt((4 * 3 * rmse(part_a) ** 2 + 6 * 3 * rmse(part_b) ** 2)
                     / (10 * 3))
    assert pooled == pytest.approx(manual, rel=1e-12)


def test_rmse_empty_errors():
    with pytest.raises(ValueError):
        rmse([])


# --------------------------------------------------------------- probability

def test_probability_all_success():
    assert reconstruction_probability([record([0.0], True)] * 5) == 1.0


def test_probability_none_success():
    assert reconstruction_probability([record([50.0], False)] * 5) == 0.0


def test_probability_fraction():
    recs = [record([0.0], True)] * 3 + [record([9.0], False)]
    assert reconstruction_probability(recs) == pytest.approx(0.75)


# --------------------------------------------------------------------- trial

def small_config(**overrides):
    base = dict(
        n_elements=16, n_measurements=16, angles_deg=(-20.0, 15.0),
        snr_db=20.0, methods=("omp",), sweep="none", sweep_values=(),
        trials=2, base_seed=555,
        solver=SolverConfig(sparsity=30, max_iters=300),
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def test_run_trial_deterministic():
    config = small_config(methods=("ncanm", "omp"))
    a = run_trial(config, 16, 16, 20.0, 0)
    b = run_trial(config, 16, 16, 20.0, 0)
    for ra, rb in zip(a, b):
        assert ra.estimated_deg == rb.estimated_deg
        assert ra.errors_deg == rb.errors_deg
        assert ra.success == rb.success
        assert ra.iterations == rb.iterations


def test_run_trial_seed_isolation():
    c1 = small_config()
    c2 = small_config(base_seed=9999)
    r1 = run_trial(c1, 16, 16, 20.0, 0)
    r2 = run_trial(c2, 16, 16, 20.0, 0)
    assert r1[0].truth_deg == r2[0].truth_deg
    assert r1[0].seed != r2[0].seed


def test_run_experiment_single_point_omp():
    # noiseless on-grid scene: OMP recovers exactly, rmse 0
    config = small_config(angles_deg=(-20.0, 15.0), snr_db=200.0, trials=1)
    results, records = run_experiment(config)
    assert len(results) == 1
    assert results[0].rmse_deg["omp"] == pytest.approx(0.0, abs=1e-6)
    assert results[0].probability["omp"] == 1.0
    assert len(records) == 1


def test_run_experiment_sweep_axis():
    config = small_config(sweep="snr", sweep_values=(10.0, 20.0), trials=1)
    results, records = run_experiment(config)
    assert [r.axis_value for r in results] == [10.0, 20.0]
    assert all(r.axis_name == "snr" for r in results)
    assert len(records) == 2


def test_run_experiment_timing_positive():
    config = small_config(trials=1)
    results, records = run_experiment(config)
    assert all(rec.wall_time > 0 for rec in records)
    assert results[0].mean_time_s["omp"] > 0


# ---------------------------------------------------------------------- emit

def sample_results():
    return [SweepResult(axis_name="snr", axis_value=10.0,
                        rmse_deg={"omp": 0.524}, probability={"omp": 0.75},
                        mean_time_s={"omp": 0.0123}, crlb_deg=0.071,
                        crlb_theta_deg=(0.07, 0.08), trials=8)]


def test_emit_csv_shape():
    buf = io.StringIO()
    emit_results(sample_results(), "csv", buf)
    lines = buf.getvalue().strip().split("\n")
    assert len(lines) == 2
    assert lines[0].startswith("axis_name,axis_value,method,rmse_deg")


def test_emit_round_trip():
    rng = np.random.default_rng(4)
    results = []
    for value in rng.uniform(0, 40, 5):
        results.append(SweepResult(
            axis_name="snr", axis_value=float(value),
            rmse_deg={"omp": float(rng.uniform(0, 3)),
                      "ncanm": float(rng.uniform(0, 3))},
            probability={"omp": float(rng.uniform()), "ncanm": float(rng.uniform())},
            mean_time_s={"omp": float(rng.uniform()), "ncanm": float(rng.uniform())},
            crlb_deg=float(rng.uniform(0, 1)), crlb_theta_deg=(0.1,),
            trials=int(rng.integers(1, 100))))
    buf = io.StringIO()
    emit_results(results, "csv", buf, include_timing=True)
    buf.seek(0)
    rows = parse_results(buf)
    i = 0
    for res in results:
        for method in res.rmse_deg:
            row = rows[i]
            assert row["axis_value"] == res.axis_value
            assert row["rmse_deg"] == res.rmse_deg[method]
            assert row["prob"] == res.probability[method]
            assert row["mean_time_s"] == res.mean_time_s[method]
            assert row["crlb_deg"] == res.crlb_deg
            assert row["trials"] == res.trials
            i += 1


def test_emit_without_timing_blank_field():
    buf = io.StringIO()
    emit_results(sample_results(), "csv", buf, include_timing=False)
    row = buf.getvalue().strip().split("\n")[1].split(",")
    assert row[5] == ""


def test_emit_jsonl():
    buf = io.StringIO()
    emit_results(sample_results(), "jsonl", buf, include_timing=False)
    row = json.loads(buf.getvalue().strip())
    assert row["method"] == "omp"
    assert row["mean_time_s"] is None


def test_emit_rejects_empty():
    with pytest.raises(ValueError):
        emit_results([], "csv", io.StringIO())


def test_dump_signals_schema():
    config = small_config(trials=3)
    buf = io.StringIO()
    dump_signals(config, buf)
    lines = buf.getvalue().strip().split("\n")
    assert len(lines) == 3
    rec = json.loads(lines[0])
    assert set(rec) == {"seed", "y_re", "y_im", "sigma2", "config_hash"}
    assert len(rec["y_re"]) == 16
    assert rec["seed"] == 555


# -------------------------------------------------------------------- config

CONFIG_TEXT = """
[scenario]
n_elements = 16
n_measurements = 16
angles_deg = -20.0, 15.0
snr_db = 20

[experiment]
methods = ncanm, omp
sweep = none
trials = 2
base_seed = 7

[solver]
sparsity = 30
max_iters = 200
min_separation_deg = 3.5

[output]
format = csv
include_timing = false
"""


def test_load_config(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text(CONFIG_TEXT)
    config = load_config(str(path))
    assert config.n_elements == 16
    assert config.methods == ("ncanm", "omp")
    assert config.solver.sparsity == 30
    assert config.solver.min_separation == 3.5
    assert config.include_timing is False
    assert config.config_hash


def test_load_config_rejects_unknown_key(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text(CONFIG_TEXT.replace("n_elements = 16",
                                        "n_elements = 16\nn_antennas = 4"))
    with pytest.raises(ConfigError):
        load_config(str(path))


def test_load_config_rejects_unknown_section(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text(CONFIG_TEXT + "\n[plotting]\nstyle = fancy\n")
    with pytest.raises(ConfigError):
        load_config(str(path))


def test_load_config_rejects_bad_method(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text(CONFIG_TEXT.replace("ncanm, omp", "esprit"))
    with pytest.raises(ConfigError):
        load_config(str(path))


def test_config_hash_stable(tmp_path):
    p1 = tmp_path / "a.cfg"
    p2 = tmp_path / "b.cfg"
    p1.write_text(CONFIG_TEXT)
    p2.write_text(CONFIG_TEXT)
    assert load_config(str(p1)).config_hash == load_config(str(p2)).config_hash
