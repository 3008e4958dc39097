"""Command-line interface.

Subcommands:
  simulate  - dump per-trial received signals as JSON lines
  estimate  - run one method on one seeded trial, print angles
  sweep     - run the configured experiment, write aggregated results
  crlb      - write bound curves over the configured sweep
  selftest  - run the numeric property suites (gradients, descent,
              curvature inequalities)

Exit codes: 0 success, 1 configuration/usage error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config
from .crlb import CrlbModel, crlb as crlb_bound
from .harness import (_scenario_at, dump_signals, emit_results, run_experiment,
                      run_trial)
from .signal_model import (ArrayGeometry, SourceScene, measurement_matrix,
                           noise_variance_for_snr, random_binary_schedule,
                           synthesize)
from .solver import (DivergenceError, SolverConfig, check_descent,
                     check_proposition1, estimate_lipschitz, grad_beta, grad_c,
                     grad_theta, gradient_blocks, solve)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="irsdoa", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command")

    p_sim = sub.add_parser("simulate", help="dump received signals as JSON lines")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--out", required=True)
    p_sim.add_argument("--seed", type=int, default=None)

    p_est = sub.add_parser("estimate", help="estimate one scene, print angles")
    p_est.add_argument("--config", required=True)
    p_est.add_argument("--method", default="ncanm")
    p_est.add_argument("--seed", type=int, default=None)

    p_swp = sub.add_parser("sweep", help="run the configured experiment")
    p_swp.add_argument("--config", required=True)
    p_swp.add_argument("--out", required=True)
    p_swp.add_argument("--seed", type=int, default=None)
    p_swp.add_argument("--progress", action="store_true")

    p_crb = sub.add_parser("crlb", help="write bound curves for the sweep")
    p_crb.add_argument("--config", required=True)
    p_crb.add_argument("--out", required=True)

    p_self = sub.add_parser("selftest", help="run numeric property suites")
    p_self.add_argument("--seed", type=int, default=0)
    return parser


def _load(path: str, seed_override) -> ExperimentConfig:
    config = load_config(path)
    if seed_override is not None:
        config = ExperimentConfig(**{**config.__dict__, "base_seed": seed_override})
    return config


def _cmd_simulate(args) -> int:
    config = _load(args.config, args.seed)
    dump_signals(config, args.out)
    return 0


def _cmd_estimate(args) -> int:
    config = _load(args.config, args.seed)
    config = ExperimentConfig(**{**config.__dict__, "methods": (args.method,)})
    records = run_trial(config, config.n_elements, config.n_measurements,
                        config.snr_db, 0)
    for angle in records[0].estimated_deg:
        print(f"{angle:.6f}")
    return 0


def _cmd_sweep(args) -> int:
    config = _load(args.config, args.seed)
    progress = None
    if args.progress:
        def progress(axis, value, trial):
            print(f"\r{axis}={value} trial {trial + 1}/{config.trials}   ",
                  end="", file=sys.stderr, flush=True)
    results, _ = run_experiment(config, progress=progress)
    if args.progress:
        print(file=sys.stderr)
    emit_results(results, config.output_format, args.out,
                 include_timing=config.include_timing)
    return 0


def _cmd_crlb(args) -> int:
    config = _load(args.config, None)
    values = config.sweep_values if config.sweep != "none" else (float("nan"),)
    k = len(config.angles_deg)
    with open(args.out, "w", encoding="utf-8") as out:
        out.write("axis_name,axis_value,angle_index,angle_deg,"
                  "crlb_std_deg,method\n")
        for value in values:
            n, p, snr = _scenario_at(config, config.sweep, value)
            geometry = ArrayGeometry.uniform(n, config.element_spacing)
            schedule = random_binary_schedule(n, p, [config.base_seed, 101],
                                              config.receiver_direction_deg)
            B = measurement_matrix(geometry, schedule)
            scene = SourceScene(np.asarray(config.angles_deg),
                                np.ones(k, dtype=complex))
            sigma2 = noise_variance_for_snr(geometry, scene, snr)
            model = CrlbModel.with_all_nuisance(
                geometry, B, config.angles_deg, np.eye(k, dtype=complex), sigma2)
            report = crlb_bound(model)
            for i in range(k):
                out.write(",".join([
                    config.sweep, repr(float(value)), str(i),
                    repr(float(config.angles_deg[i])),
                    repr(float(np.sqrt(report.crlb_theta_deg2[i]))),
                    report.method,
                ]) + "\n")
    return 0


def _cmd_selftest(args) -> int:
    rng = np.random.default_rng(args.seed)
    passed = failed = 0

    def check(name, ok):
        nonlocal passed, failed
        print(f"  {'pass' if ok else 'FAIL'}  {name}")
        passed += ok
        failed += not ok

    geometry = ArrayGeometry.uniform(16)
    schedule = random_binary_schedule(16, 16, args.seed)
    B = measurement_matrix(geometry, schedule)
    scene = SourceScene(np.array([-20.5, 14.2]), np.array([1.0, 1.0 + 0j]))
    sigma2 = noise_variance_for_snr(geometry, scene, 20.0)
    signal = synthesize(geometry, schedule, scene, sigma2, args.seed)

    print("gradient finite-difference suite:")
    from .solver import AtomBank, objective
    worst = 0.0
    h = 1e-6
    for _ in range(20):
        s = 6
        c = rng.uniform(0.1, 1.0, s)
        beta = rng.uniform(0, 2 * np.pi, s)
        theta = rng.uniform(-50, 50, s)
        bank = AtomBank(c=c, beta=beta, theta=theta)
        analytic = (grad_c(bank, signal, B, geometry),
                    grad_beta(bank, signal, B, geometry),
                    grad_theta(bank, signal, B, geometry))
        for k in range(s):
            for which, g, unit in zip((0, 1, 2), analytic,
                                      (1.0, 1.0, 180.0 / np.pi)):
                vecs = [c.copy(), beta.copy(), theta.copy()]
                vecs[which][k] += h * unit
                fp = objective(AtomBank(*vecs), signal, B, geometry)
                vecs = [c.copy(), beta.copy(), theta.copy()]
                vecs[which][k] -= h * unit
                fm = objective(AtomBank(*vecs), signal, B, geometry)
                fd = (fp - fm) / (2 * h)
                worst = max(worst, abs(fd - g[k]) / max(abs(fd), 1e-9))
    check(f"analytic gradients match finite differences (worst {worst:.2e})",
          worst < 1e-5)

    print("descent suite (conservative step):")
    from .solver import estimate_curvature_bounds
    one_src = SourceScene(np.array([11.3]), np.array([1.0 + 0j]))
    s2 = noise_variance_for_snr(geometry, one_src, 25.0)
    all_desc = True
    for t in range(10):
        sig = synthesize(geometry, schedule, one_src, s2, args.seed + t)
        cfg = SolverConfig(sparsity=8, max_iters=400, seed=args.seed + t,
                           min_separation=30.0)
        low, high = estimate_curvature_bounds(sig, B, geometry, cfg, 24)
        zeta = low / high ** 2
        rho = float(np.sqrt(max(1 - 2 * zeta * low + zeta ** 2 * high ** 2, 0)))
        eta = 0.5 * zeta / (1 + rho)
        est = solve(sig, B, geometry,
                    SolverConfig(**{**cfg.__dict__, "step_size": eta}))
        all_desc &= check_descent(est.diagnostics)
    check("objective non-increasing outside perturbations (10 solves)", all_desc)

    print("curvature inequality suite:")
    cfg = SolverConfig(sparsity=60, max_iters=2000, seed=args.seed)
    report = check_proposition1(signal, B, geometry, cfg, n_pairs=200)
    check(f"smoothness upper bound holds on {report.n_pairs} pairs",
          report.upper_bound_violations == 0)
    check("gradient-difference bound holds", report.lipschitz_violations == 0)

    print(f"{passed} passed, {failed} failed")
    return 0 if failed == 0 else 2


def cli(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    handlers = {
        "simulate": _cmd_simulate,
        "estimate": _cmd_estimate,
        "sweep": _cmd_sweep,
        "crlb": _cmd_crlb,
        "selftest": _cmd_selftest,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DivergenceError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli())


if __name__ == "__main__":
    main()
