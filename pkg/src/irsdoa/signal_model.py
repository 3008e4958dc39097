"""Array geometry, IRS code schedule, source scene, and received-signal synthesis.

The measurement chain is: K far-field sources impinge on an N-element
reflecting surface; during measurement p the surface applies per-element
complex coefficients e(p) and reflects toward a single receiver at angle
phi, giving one scalar sample.  Stacking the P coded measurements yields
y = B^T z + w with z the array-domain signal and B the N x P measurement
matrix whose column p is a(phi) * e(p) elementwise.

Angles are degrees at every public boundary; trigonometry is done in
radians internally.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEG = np.pi / 180.0


@dataclass(frozen=True)
class ArrayGeometry:
    """Element positions of the reflecting surface, in wavelengths."""

    positions: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 1 or pos.size < 2:
            raise ValueError("geometry needs at least 2 element positions")
        if not np.all(np.diff(pos) > 0):
            raise ValueError("element positions must be strictly increasing")
        object.__setattr__(self, "positions", pos)

    @classmethod
    def uniform(cls, n_elements: int, spacing: float = 0.5) -> "ArrayGeometry":
        """Uniform linear array; default spacing is half a wavelength."""
        if n_elements < 2:
            raise ValueError("need at least 2 elements")
        return cls(spacing * np.arange(n_elements, dtype=float))

    @property
    def n_elements(self) -> int:
        return self.positions.size


@dataclass(frozen=True)
class IrsSchedule:
    """P x N complex reflection coefficients plus the receiver direction.

    Row p holds the per-element coefficients A_{n,p} * exp(j*phase_{n,p})
    applied during measurement p.  For a binary-phase surface every entry
    is +1 or -1.
    """

    coefficients: np.ndarray
    receiver_direction_deg: float = 0.0

    def __post_init__(self):
        coef = np.asarray(self.coefficients, dtype=complex)
        if coef.ndim != 2 or coef.shape[0] < 1:
            raise ValueError("coefficients must be a P x N matrix with P >= 1")
        object.__setattr__(self, "coefficients", coef)
        object.__setattr__(self, "receiver_direction_deg",
                           float(self.receiver_direction_deg))

    @property
    def n_measurements(self) -> int:
        return self.coefficients.shape[0]

    @property
    def n_elements(self) -> int:
        return self.coefficients.shape[1]


def random_binary_schedule(n_elements: int, n_measurements: int, seed,
                           receiver_direction_deg: float = 0.0) -> IrsSchedule:
    """Schedule with i.i.d. +-1 codes (binary 0/pi phase surface)."""
    rng = np.random.default_rng(seed)
    codes = rng.integers(0, 2, size=(n_measurements, n_elements)) * 2 - 1
    return IrsSchedule(codes.astype(complex), receiver_direction_deg)


@dataclass(frozen=True)
class SourceScene:
    """Ground-truth source angles (degrees) and complex amplitudes.

    Single-snapshot regime: one complex amplitude per source.  An empty
    scene (no sources) is permitted and synthesizes the zero signal.
    """

    angles_deg: np.ndarray
    amplitudes: np.ndarray

    def __post_init__(self):
        ang = np.atleast_1d(np.asarray(self.angles_deg, dtype=float))
        amp = np.atleast_1d(np.asarray(self.amplitudes, dtype=complex))
        if ang.size != amp.size:
            raise ValueError("angles and amplitudes must have equal length")
        if ang.size:
            if np.any(np.abs(ang) >= 90.0):
                raise ValueError("source angles must lie inside (-90, 90) degrees")
            if np.unique(ang).size != ang.size:
                raise ValueError("source angles must be pairwise distinct")
        object.__setattr__(self, "angles_deg", ang)
        object.__setattr__(self, "amplitudes", amp)

    @property
    def n_sources(self) -> int:
        return self.angles_deg.size


@dataclass(frozen=True)
class ReceivedSignal:
    """One stack of P coded measurements, plus the noise metadata."""

    y: np.ndarray
    noise_variance: float
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "y", np.asarray(self.y, dtype=complex))


def steering_vector(geometry: ArrayGeometry, angle_deg) -> np.ndarray:
    """Array response to a unit plane wave from `angle_deg`.

    Element n is exp(j * 2*pi * d_n * sin(angle)), d_n in wavelengths.
    Accepts a scalar angle (returns shape (N,)) or a vector of angles
    (returns shape (N, K)).
    """
    ang = np.asarray(angle_deg, dtype=float)
    if np.any(np.abs(ang) > 90.0):
        raise ValueError("steering angle must be within [-90, 90] degrees")
    phase = 2j * np.pi * np.multiply.outer(geometry.positions, np.sin(ang * DEG))
    return np.exp(phase)


def steering_derivative(geometry: ArrayGeometry, angle_deg,
                        omit_cos_factor: bool = False) -> np.ndarray:
    """Derivative of `steering_vector` w.r.t. the angle in radians.

    Element n is j * 2*pi * d_n * cos(angle) * exp(j * 2*pi * d_n * sin(angle)).
    With `omit_cos_factor` the cos(angle) chain factor is dropped, which
    reproduces a common flat-phase-slope approximation of this derivative.
    """
    ang = np.asarray(angle_deg, dtype=float)
    if np.any(np.abs(ang) > 90.0):
        raise ValueError("steering angle must be within [-90, 90] degrees")
    rad = ang * DEG
    base = np.exp(2j * np.pi * np.multiply.outer(geometry.positions, np.sin(rad)))
    slope = 2j * np.pi * geometry.positions
    if omit_cos_factor:
        return np.multiply.outer(slope, np.ones_like(rad)) * base
    return np.multiply.outer(slope, np.cos(rad)) * base


def measurement_matrix(geometry: ArrayGeometry, schedule: IrsSchedule) -> np.ndarray:
    """N x P matrix whose column p is a(phi) * e(p) elementwise."""
    if schedule.n_elements != geometry.n_elements:
        raise ValueError(
            f"schedule width {schedule.n_elements} != geometry size "
            f"{geometry.n_elements}")
    a_phi = steering_vector(geometry, schedule.receiver_direction_deg)
    return a_phi[:, None] * schedule.coefficients.T


def noiseless_signal(geometry: ArrayGeometry, schedule: IrsSchedule,
                     scene: SourceScene) -> np.ndarray:
    """B^T z with z the superposition of steering vectors times amplitudes."""
    B = measurement_matrix(geometry, schedule)
    if scene.n_sources == 0:
        return np.zeros(schedule.n_measurements, dtype=complex)
    z = steering_vector(geometry, scene.angles_deg) @ scene.amplitudes
    return B.T @ z


def synthesize(geometry: ArrayGeometry, schedule: IrsSchedule, scene: SourceScene,
               noise_variance: float, seed: int) -> ReceivedSignal:
    """Received signal y = B^T z + w with circular complex Gaussian noise.

    The noise draw is fully determined by `seed`.
    """
    if noise_variance < 0:
        raise ValueError("noise variance must be nonnegative")
    y = noiseless_signal(geometry, schedule, scene)
    if noise_variance > 0:
        rng = np.random.default_rng(seed)
        scale = np.sqrt(noise_variance / 2.0)
        w = rng.normal(scale=scale, size=y.size) + 1j * rng.normal(scale=scale, size=y.size)
        y = y + w
    return ReceivedSignal(y=y, noise_variance=float(noise_variance), seed=int(seed))


def noise_variance_for_snr(geometry: ArrayGeometry, scene: SourceScene,
                           snr_db: float) -> float:
    """Noise variance giving the requested SNR.

    SNR is average per-measurement signal power over noise variance,
    E[||B^T A s||^2] / (P * sigma^2), with the expectation over random
    codes and source phases: E = P * N * sum_k |s_k|^2, so
    sigma^2 = N * sum_k |s_k|^2 / snr.
    """
    power = float(np.sum(np.abs(scene.amplitudes) ** 2))
    if power == 0.0:
        raise ValueError("scene has no signal power")
    return geometry.n_elements * power / 10.0 ** (snr_db / 10.0)
