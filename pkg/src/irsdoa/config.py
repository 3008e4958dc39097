"""Experiment configuration: INI-style file with fixed sections and keys.

Unknown sections or keys are errors (fail fast on typos).  All keys are
documented in the README; every solver key is optional and falls back to
the SolverConfig default.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field

import numpy as np

from .solver import SolverConfig


class ConfigError(ValueError):
    pass


_SCENARIO_KEYS = {"n_elements", "n_measurements", "element_spacing",
                  "receiver_direction_deg", "angles_deg", "snr_db"}
_EXPERIMENT_KEYS = {"methods", "sweep", "sweep_values", "trials", "base_seed",
                    "success_tolerance_deg"}
_SOLVER_KEYS = {"sparsity", "max_iters", "step_size", "grad_epsilon",
                "perturb_radius", "threshold_rule", "min_separation_deg",
                "theta_range_deg", "omit_cos_factor", "gain_cut",
                "cluster_factor", "floor_margin", "stop_grace",
                "stall_window", "stall_improvement", "lipschitz_samples",
                "angle_gradient_scale"}
_GRID_KEYS = {"start_deg", "stop_deg", "step_deg"}
_FFT_KEYS = {"zero_pad_factor"}
_OUTPUT_KEYS = {"format", "include_timing"}

_SECTIONS = {"scenario": _SCENARIO_KEYS, "experiment": _EXPERIMENT_KEYS,
             "solver": _SOLVER_KEYS, "grid": _GRID_KEYS, "fft": _FFT_KEYS,
             "output": _OUTPUT_KEYS}

_METHODS = ("ncanm", "omp", "ls", "fft", "music")
_AXES = ("none", "snr", "n_elements", "n_measurements")


@dataclass(frozen=True)
class ExperimentConfig:
    n_elements: int = 32
    n_measurements: int = 32
    element_spacing: float = 0.5
    receiver_direction_deg: float = 0.0
    angles_deg: tuple = (-30.01, 12.51, 20.00)
    snr_db: float = 20.0
    methods: tuple = ("ncanm", "omp", "ls", "fft")
    sweep: str = "none"
    sweep_values: tuple = ()
    trials: int = 200
    base_seed: int = 12345
    success_tolerance_deg: float = 1.0
    solver: SolverConfig = field(default_factory=SolverConfig)
    grid_start_deg: float = -50.0
    grid_stop_deg: float = 50.0
    grid_step_deg: float = 0.5
    zero_pad_factor: int = 16
    output_format: str = "csv"
    include_timing: bool = False
    config_hash: str = ""

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not self.methods:
            raise ConfigError("methods must be nonempty")
        for m in self.methods:
            if m not in _METHODS:
                raise ConfigError(f"unknown method {m!r}; choose from {_METHODS}")
        if self.sweep not in _AXES:
            raise ConfigError(f"unknown sweep axis {self.sweep!r}; choose from {_AXES}")
        if self.sweep != "none" and not self.sweep_values:
            raise ConfigError("sweep_values must be nonempty for a sweep")
        if self.output_format not in ("csv", "jsonl"):
            raise ConfigError("output format must be csv or jsonl")
        if len(self.angles_deg) < 1:
            raise ConfigError("scenario needs at least one source angle")


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _parse_floats(text: str) -> tuple:
    return tuple(float(tok) for tok in text.replace(",", " ").split())


def _auto_or_float(text: str):
    t = text.strip().lower()
    return None if t in ("auto", "none", "") else float(text)


def load_config(path: str) -> ExperimentConfig:
    """Parse and validate an experiment configuration file."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path!r}")
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        for key in parser[section]:
            if key not in _SECTIONS[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")

    def get(section, key, default=None):
        if parser.has_option(section, key):
            return parser.get(section, key)
        return default

    kwargs = {}
    if parser.has_section("scenario"):
        s = parser["scenario"]
        if "n_elements" in s:
            kwargs["n_elements"] = int(s["n_elements"])
        if "n_measurements" in s:
            kwargs["n_measurements"] = int(s["n_measurements"])
        if "element_spacing" in s:
            kwargs["element_spacing"] = float(s["element_spacing"])
        if "receiver_direction_deg" in s:
            kwargs["receiver_direction_deg"] = float(s["receiver_direction_deg"])
        if "angles_deg" in s:
            kwargs["angles_deg"] = _parse_floats(s["angles_deg"])
        if "snr_db" in s:
            kwargs["snr_db"] = float(s["snr_db"])
    if parser.has_section("experiment"):
        e = parser["experiment"]
        if "methods" in e:
            kwargs["methods"] = tuple(tok.strip() for tok in
                                      e["methods"].split(",") if tok.strip())
        if "sweep" in e:
            kwargs["sweep"] = e["sweep"].strip()
        if "sweep_values" in e:
            kwargs["sweep_values"] = _parse_floats(e["sweep_values"])
        if "trials" in e:
            kwargs["trials"] = int(e["trials"])
        if "base_seed" in e:
            kwargs["base_seed"] = int(e["base_seed"])
        if "success_tolerance_deg" in e:
            kwargs["success_tolerance_deg"] = float(e["success_tolerance_deg"])
    solver_kwargs = {}
    if parser.has_section("solver"):
        v = parser["solver"]
        if "sparsity" in v:
            solver_kwargs["sparsity"] = int(v["sparsity"])
        if "max_iters" in v:
            solver_kwargs["max_iters"] = int(v["max_iters"])
        if "step_size" in v:
            solver_kwargs["step_size"] = _auto_or_float(v["step_size"])
        if "grad_epsilon" in v:
            solver_kwargs["grad_epsilon"] = _auto_or_float(v["grad_epsilon"])
        if "perturb_radius" in v:
            solver_kwargs["perturb_radius"] = _auto_or_float(v["perturb_radius"])
        if "threshold_rule" in v:
            solver_kwargs["threshold_rule"] = v["threshold_rule"].strip()
        if "min_separation_deg" in v:
            solver_kwargs["min_separation"] = float(v["min_separation_deg"])
        if "theta_range_deg" in v:
            lohi = _parse_floats(v["theta_range_deg"])
            if len(lohi) != 2:
                raise ConfigError("theta_range_deg needs two values")
            solver_kwargs["theta_range"] = lohi
        if "omit_cos_factor" in v:
            solver_kwargs["omit_cos_factor"] = _parse_bool(v["omit_cos_factor"])
        if "gain_cut" in v:
            solver_kwargs["gain_cut"] = float(v["gain_cut"])
        if "cluster_factor" in v:
            solver_kwargs["cluster_factor"] = float(v["cluster_factor"])
        if "floor_margin" in v:
            solver_kwargs["floor_margin"] = float(v["floor_margin"])
        if "stop_grace" in v:
            solver_kwargs["stop_grace"] = int(v["stop_grace"])
        if "stall_window" in v:
            solver_kwargs["stall_window"] = int(v["stall_window"])
        if "stall_improvement" in v:
            solver_kwargs["stall_improvement"] = float(v["stall_improvement"])
        if "lipschitz_samples" in v:
            solver_kwargs["lipschitz_samples"] = int(v["lipschitz_samples"])
        if "angle_gradient_scale" in v:
            solver_kwargs["angle_gradient_scale"] = _auto_or_float(
                v["angle_gradient_scale"])
    if parser.has_section("grid"):
        g = parser["grid"]
        if "start_deg" in g:
            kwargs["grid_start_deg"] = float(g["start_deg"])
        if "stop_deg" in g:
            kwargs["grid_stop_deg"] = float(g["stop_deg"])
        if "step_deg" in g:
            kwargs["grid_step_deg"] = float(g["step_deg"])
    if parser.has_section("fft"):
        kwargs["zero_pad_factor"] = int(parser["fft"].get("zero_pad_factor", "16"))
    if parser.has_section("output"):
        o = parser["output"]
        if "format" in o:
            kwargs["output_format"] = o["format"].strip()
        if "include_timing" in o:
            kwargs["include_timing"] = _parse_bool(o["include_timing"])

    try:
        solver = SolverConfig(**solver_kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    canon = "\n".join(f"{sec}.{key}={parser[sec][key]}"
                      for sec in sorted(parser.sections())
                      for key in sorted(parser[sec]))
    digest = hashlib.sha256(canon.encode()).hexdigest()[:16]
    try:
        return ExperimentConfig(solver=solver, config_hash=digest, **kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
