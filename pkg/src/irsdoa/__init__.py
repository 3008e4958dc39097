"""Gridless DOA estimation for a coded-surface single-receiver system."""

__version__ = "0.1.0"

from .signal_model import (ArrayGeometry, IrsSchedule, ReceivedSignal,
                           SourceScene, measurement_matrix,
                           noise_variance_for_snr, noiseless_signal,
                           random_binary_schedule, steering_derivative,
                           steering_vector, synthesize)
from .solver import (AtomBank, DivergenceError, DoaEstimate, SolverConfig,
                     SolverDiagnostics, balanced_angle_scale, check_descent,
                     check_proposition1, cluster_atoms, estimate_curvature_bounds,
                     estimate_lipschitz, grad_beta, grad_c, grad_theta,
                     gradient_blocks, gradient_step, is_separated, maybe_perturb,
                     objective, proposition_bounds_check, prune_step, solve,
                     sort_by_gain, threshold_step)
from .baselines import (AngleGrid, fft_estimate, ls_estimate, music_ss_estimate,
                        omp_estimate)
from .crlb import CrlbModel, CrlbReport, covariance_G, crlb, dG_dpsi, dG_dtheta, \
    fisher_matrix
from .config import ConfigError, ExperimentConfig, load_config
from .harness import (SweepResult, TrialRecord, dump_signals, emit_results,
                      match_estimates, parse_results, reconstruction_probability,
                      rmse, run_experiment, run_trial)
