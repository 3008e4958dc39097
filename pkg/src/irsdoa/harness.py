"""Seeded Monte Carlo experiment runner, metrics, and result persistence.

Trial t of every experiment derives all of its randomness from
base_seed + t: the noise draw uses that integer directly, while the code
schedule, the source phases, and the solver use decorated streams of the
same integer, so reruns are bitwise identical and trials are independent.
A fresh random binary code schedule is drawn per trial, so aggregate
curves average over codes as well as noise.
"""

from __future__ import annotations

import io
import itertools
import json
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import baselines
from .baselines import AngleGrid
from .config import ExperimentConfig
from .crlb import CrlbModel, crlb as crlb_bound
from .signal_model import (ArrayGeometry, SourceScene, measurement_matrix,
                           noise_variance_for_snr, random_binary_schedule,
                           synthesize)
from .solver import DivergenceError, SolverConfig, solve

MISSING_PENALTY_DEG = 100.0  # DOA range width charged per unmatched source

_STREAM_SCHEDULE = 101
_STREAM_PHASES = 102


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    seed: int
    method: str
    estimated_deg: tuple
    truth_deg: tuple
    errors_deg: tuple
    success: bool
    wall_time: float
    iterations: int


@dataclass(frozen=True)
class SweepResult:
    axis_name: str
    axis_value: float
    rmse_deg: dict
    probability: dict
    mean_time_s: dict
    crlb_deg: float
    crlb_theta_deg: tuple
    trials: int


def match_estimates(truth_deg, estimated_deg, penalty: float = MISSING_PENALTY_DEG):
    """Per-truth absolute errors under the minimum-total-error assignment.

    Exhaustive over permutations (intended for K <= 5).  When there are
    fewer estimates than truths the unmatched truths are charged `penalty`
    degrees; extra estimates are ignored.
    """
    truth = list(truth_deg)
    est = list(estimated_deg)
    k = len(truth)
    if not est:
        return [penalty] * k
    # pad with sentinels so an estimate may match any truth and unmatched
    # truths draw the penalty
    candidates = est + [None] * max(0, k - len(est))
    best = None
    for picked in itertools.permutations(range(len(candidates)), k):
        errs = [penalty if candidates[j] is None else abs(truth[i] - candidates[j])
                for i, j in enumerate(picked)]
        total = sum(errs)
        if best is None or total < best[0]:
            best = (total, errs)
    return best[1]


def rmse(records) -> float:
    """Pooled root-mean-square error over all records' matched errors,
    normalized by (number of trials) x (sources per trial)."""
    errors = [e for rec in records for e in rec.errors_deg]
    if not errors:
        raise ValueError("no records to aggregate")
    return float(np.sqrt(np.mean(np.square(errors))))


def reconstruction_probability(records) -> float:
    """Fraction of records whose success flag is set."""
    records = list(records)
    if not records:
        raise ValueError("no records to aggregate")
    return float(np.mean([rec.success for rec in records]))


def _estimate_success(truth_deg, estimated_deg, tolerance: float) -> bool:
    if len(estimated_deg) != len(truth_deg):
        return False
    errors = match_estimates(truth_deg, estimated_deg)
    return all(e <= tolerance for e in errors)


def _run_method(method: str, signal, B, geometry, config: ExperimentConfig,
                solver_config: SolverConfig):
    """Returns (angles ascending, iterations)."""
    k = len(config.angles_deg)
    grid = AngleGrid(config.grid_start_deg, config.grid_stop_deg,
                     config.grid_step_deg)
    if method == "ncanm":
        est = solve(signal, B, geometry, solver_config)
        return est.angles_deg, est.diagnostics.iters_run
    if method == "omp":
        return baselines.omp_estimate(signal.y, B, geometry, grid, k), 0
    if method == "ls":
        return baselines.ls_estimate(signal.y, B, geometry, grid, k), 0
    if method == "fft":
        return baselines.fft_estimate(signal.y, B, geometry, k,
                                      config.zero_pad_factor), 0
    if method == "music":
        return baselines.music_ss_estimate(signal.y, B, geometry, k, grid), 0
    raise ValueError(f"unknown method {method!r}")


def _scenario_at(config: ExperimentConfig, axis: str, value):
    n, p, snr = config.n_elements, config.n_measurements, config.snr_db
    if axis == "snr":
        snr = float(value)
    elif axis == "n_elements":
        n = int(value)
    elif axis == "n_measurements":
        p = int(value)
    return n, p, snr


def _crlb_reference(geometry, B, angles_deg, snr_db):
    """Schur-complement bound (all source powers and the noise floor
    unknown) for the reference curve; nan when the bound is unavailable."""
    k = len(angles_deg)
    scene = SourceScene(angles_deg, np.ones(k, dtype=complex))
    sigma2 = noise_variance_for_snr(geometry, scene, snr_db)
    try:
        model = CrlbModel.with_all_nuisance(geometry, B, angles_deg,
                                            np.eye(k, dtype=complex), sigma2)
        report = crlb_bound(model)
    except np.linalg.LinAlgError:
        return float("nan"), tuple(float("nan") for _ in range(k))
    per_angle = np.sqrt(report.crlb_theta_deg2)
    return float(np.sqrt(np.mean(report.crlb_theta_deg2))), tuple(per_angle)


def run_trial(config: ExperimentConfig, n_elements: int, n_measurements: int,
              snr_db: float, trial: int):
    """One seeded trial at one scenario point: fresh codes, phases, noise."""
    seed = config.base_seed + trial
    geometry = ArrayGeometry.uniform(n_elements, config.element_spacing)
    schedule = random_binary_schedule(
        n_elements, n_measurements, [seed, _STREAM_SCHEDULE],
        config.receiver_direction_deg)
    rng_ph = np.random.default_rng([seed, _STREAM_PHASES])
    k = len(config.angles_deg)
    amplitudes = np.exp(1j * rng_ph.uniform(0.0, 2.0 * np.pi, k))
    scene = SourceScene(np.asarray(config.angles_deg), amplitudes)
    sigma2 = noise_variance_for_snr(geometry, scene, snr_db)
    signal = synthesize(geometry, schedule, scene, sigma2, seed)
    B = measurement_matrix(geometry, schedule)
    solver_config = SolverConfig(**{**config.solver.__dict__, "seed": seed})
    records = []
    for method in config.methods:
        t0 = time.perf_counter()
        iterations = 0
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                angles, iterations = _run_method(method, signal, B, geometry,
                                                 config, solver_config)
        except DivergenceError:
            angles = np.array([])
        elapsed = time.perf_counter() - t0
        errors = match_estimates(config.angles_deg, angles)
        records.append(TrialRecord(
            trial=trial, seed=seed, method=method,
            estimated_deg=tuple(float(a) for a in angles),
            truth_deg=tuple(config.angles_deg),
            errors_deg=tuple(errors),
            success=_estimate_success(config.angles_deg, angles,
                                      config.success_tolerance_deg),
            wall_time=elapsed,
            iterations=iterations,
        ))
    return records


def run_experiment(config: ExperimentConfig, progress=None):
    """Full sweep: every axis value x trial x method, aggregated per point.

    Returns (sweep results, all trial records).  Deterministic given the
    config; trials run in trial-index order so the aggregation is a fixed
    reduction.
    """
    values = config.sweep_values if config.sweep != "none" else (float("nan"),)
    results = []
    all_records = []
    for value in values:
        n, p, snr = _scenario_at(config, config.sweep, value)
        point_records = []
        for t in range(config.trials):
            point_records.extend(run_trial(config, n, p, snr, t))
            if progress is not None:
                progress(config.sweep, value, t)
        all_records.extend(point_records)
        geometry = ArrayGeometry.uniform(n, config.element_spacing)
        ref_schedule = random_binary_schedule(
            n, p, [config.base_seed, _STREAM_SCHEDULE],
            config.receiver_direction_deg)
        ref_B = measurement_matrix(geometry, ref_schedule)
        crlb_rms, crlb_per_angle = _crlb_reference(geometry, ref_B,
                                                   config.angles_deg, snr)
        by_method = {m: [r for r in point_records if r.method == m]
                     for m in config.methods}
        results.append(SweepResult(
            axis_name=config.sweep,
            axis_value=float(value),
            rmse_deg={m: rmse(rs) for m, rs in by_method.items()},
            probability={m: reconstruction_probability(rs)
                         for m, rs in by_method.items()},
            mean_time_s={m: float(np.mean([r.wall_time for r in rs]))
                         for m, rs in by_method.items()},
            crlb_deg=crlb_rms,
            crlb_theta_deg=crlb_per_angle,
            trials=config.trials,
        ))
    return results, all_records


_CSV_HEADER = "axis_name,axis_value,method,rmse_deg,prob,mean_time_s,crlb_deg,trials"


def _format_number(x) -> str:
    return repr(float(x))


def emit_results(results, fmt: str, path, include_timing: bool = True) -> None:
    """Write aggregated sweep results as CSV or JSON lines.

    One row per (sweep point, method).  Timing is hardware-dependent and is
    omitted (empty CSV field / null) unless include_timing is set, keeping
    default outputs byte-identical across reruns.
    """
    results = list(results)
    if not results:
        raise ValueError("no results to emit")
    if fmt not in ("csv", "jsonl"):
        raise ValueError(f"unknown format {fmt!r}")
    own = isinstance(path, (str, bytes))
    stream = open(path, "w", encoding="utf-8") if own else path
    try:
        if fmt == "csv":
            stream.write(_CSV_HEADER + "\n")
            for res in results:
                for method in res.rmse_deg:
                    t = _format_number(res.mean_time_s[method]) if include_timing else ""
                    stream.write(",".join([
                        res.axis_name,
                        _format_number(res.axis_value),
                        method,
                        _format_number(res.rmse_deg[method]),
                        _format_number(res.probability[method]),
                        t,
                        _format_number(res.crlb_deg),
                        str(res.trials),
                    ]) + "\n")
        else:
            for res in results:
                for method in res.rmse_deg:
                    row = {
                        "axis_name": res.axis_name,
                        "axis_value": float(res.axis_value),
                        "method": method,
                        "rmse_deg": float(res.rmse_deg[method]),
                        "prob": float(res.probability[method]),
                        "mean_time_s": (float(res.mean_time_s[method])
                                        if include_timing else None),
                        "crlb_deg": float(res.crlb_deg),
                        "trials": res.trials,
                    }
                    stream.write(json.dumps(row) + "\n")
    finally:
        if own:
            stream.close()


def parse_results(path):
    """Read back an emitted CSV into a list of row dicts (floats parsed)."""
    own = isinstance(path, (str, bytes))
    stream = open(path, "r", encoding="utf-8") if own else path
    try:
        header = stream.readline().strip().split(",")
        if header != _CSV_HEADER.split(","):
            raise ValueError("unrecognized results header")
        rows = []
        for line in stream:
            parts = line.rstrip("\n").split(",")
            rows.append({
                "axis_name": parts[0],
                "axis_value": float(parts[1]),
                "method": parts[2],
                "rmse_deg": float(parts[3]),
                "prob": float(parts[4]),
                "mean_time_s": float(parts[5]) if parts[5] else None,
                "crlb_deg": float(parts[6]),
                "trials": int(parts[7]),
            })
        return rows
    finally:
        if own:
            stream.close()


def dump_signals(config: ExperimentConfig, path) -> None:
    """Write one JSON-lines record per trial of the (non-sweep) scenario:
    {seed, y_re, y_im, sigma2, config_hash}."""
    own = isinstance(path, (str, bytes))
    stream = open(path, "w", encoding="utf-8") if own else path
    try:
        geometry = ArrayGeometry.uniform(config.n_elements, config.element_spacing)
        k = len(config.angles_deg)
        for t in range(config.trials):
            seed = config.base_seed + t
            schedule = random_binary_schedule(
                config.n_elements, config.n_measurements,
                [seed, _STREAM_SCHEDULE], config.receiver_direction_deg)
            rng_ph = np.random.default_rng([seed, _STREAM_PHASES])
            amplitudes = np.exp(1j * rng_ph.uniform(0.0, 2.0 * np.pi, k))
            scene = SourceScene(np.asarray(config.angles_deg), amplitudes)
            sigma2 = noise_variance_for_snr(geometry, scene, config.snr_db)
            signal = synthesize(geometry, schedule, scene, sigma2, seed)
            stream.write(json.dumps({
                "seed": seed,
                "y_re": [float(v) for v in signal.y.real],
                "y_im": [float(v) for v in signal.y.imag],
                "sigma2": float(sigma2),
                "config_hash": config.config_hash,
            }) + "\n")
    finally:
        if own:
            stream.close()
