"""Grid-based reference estimators: OMP, least squares, FFT, single-snapshot MUSIC.

All baselines see only the coded measurements y and the known matrix B.
FFT and MUSIC first recover the array-domain signal via z_hat = pinv(B^T) y
and then run their textbook form on z_hat; this front-end is the minimal
assumption that reduces each method to its classical single-snapshot form,
and absolute accuracies depend on it.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .signal_model import ArrayGeometry, steering_vector


@dataclass(frozen=True)
class AngleGrid:
    """Uniform search grid in degrees."""

    start_deg: float = -50.0
    stop_deg: float = 50.0
    step_deg: float = 0.5

    def __post_init__(self):
        if not self.start_deg < self.stop_deg:
            raise ValueError("grid start must be below stop")
        if self.step_deg <= 0:
            raise ValueError("grid step must be positive")

    def angles(self) -> np.ndarray:
        n = int(round((self.stop_deg - self.start_deg) / self.step_deg))
        return self.start_deg + self.step_deg * np.arange(n + 1)

    def dictionary(self, geometry: ArrayGeometry, B: np.ndarray) -> np.ndarray:
        """P x G matrix of measured steering columns B^T a(theta_g)."""
        return B.T @ steering_vector(geometry, self.angles())


def omp_estimate(y: np.ndarray, B: np.ndarray, geometry: ArrayGeometry,
                 grid: AngleGrid, n_sources: int) -> np.ndarray:
    """Greedy matching pursuit over the grid dictionary.

    Each round selects the column with maximal normalized correlation
    against the residual, then refits all selected columns by least
    squares.  Returns the selected grid angles sorted ascending.
    """
    angles = grid.angles()
    if n_sources < 1:
        raise ValueError("need at least one source")
    if n_sources > angles.size:
        raise ValueError("more sources requested than grid points")
    D = grid.dictionary(geometry, B)
    norms = np.linalg.norm(D, axis=0)
    norms[norms == 0] = 1.0
    resid = y.astype(complex).copy()
    selected: list[int] = []
    for _ in range(n_sources):
        corr = np.abs(D.conj().T @ resid) / norms
        corr[selected] = -1.0
        selected.append(int(np.argmax(corr)))
        coef, *_ = np.linalg.lstsq(D[:, selected], y, rcond=None)
        resid = y - D[:, selected] @ coef
    return np.sort(angles[selected])


def ls_estimate(y: np.ndarray, B: np.ndarray, geometry: ArrayGeometry,
                grid: AngleGrid, n_sources: int) -> np.ndarray:
    """Minimum-norm least squares over the full grid dictionary.

    Solves y = D s by pseudo-inverse and returns the angles of the
    n_sources largest |s| entries.
    """
    angles = grid.angles()
    D = grid.dictionary(geometry, B)
    coef = np.linalg.pinv(D) @ y
    mag = np.abs(coef)
    if not np.any(mag > 0):
        warnings.warn("all-zero least-squares solution; returning lowest grid angles")
        return angles[:n_sources].copy()
    # ties broken toward smaller angle via stable ordering
    order = np.argsort(-mag, kind="stable")[:n_sources]
    return np.sort(angles[order])


def _local_maxima(values: np.ndarray) -> np.ndarray:
    """Indices of strict local maxima (plateau edges excluded)."""
    v = values
    idx = np.arange(1, v.size - 1)
    mask = (v[idx] > v[idx - 1]) & (v[idx] > v[idx + 1])
    return idx[mask]


def fft_estimate(y: np.ndarray, B: np.ndarray, geometry: ArrayGeometry,
                 n_sources: int, zero_pad_factor: int = 16) -> np.ndarray:
    """Zero-padded spatial spectrum of the recovered array signal.

    Recovers z_hat = pinv(B^T) y, evaluates its discrete spectrum over the
    sin(theta) axis, and maps the n_sources largest spectral peaks back to
    angles.  Assumes half-wavelength spacing for the bin-to-angle map.
    Returns fewer angles (with a warning) if fewer peaks are resolvable.
    """
    if zero_pad_factor < 1:
        raise ValueError("zero_pad_factor must be >= 1")
    n = geometry.n_elements
    z = np.linalg.pinv(B.T) @ y
    nfft = zero_pad_factor * n
    spec = np.abs(np.fft.fft(z, n=nfft))
    # bin b -> normalized frequency f = b/nfft wrapped to [-1/2, 1/2);
    # half-wavelength spacing gives sin(theta) = 2 f
    sines = 2.0 * np.fft.fftfreq(nfft)
    order = np.argsort(sines, kind="stable")
    sines, spec = sines[order], spec[order]
    visible = np.abs(sines) < 1.0
    sines, spec = sines[visible], spec[visible]
    peaks = _local_maxima(spec)
    if peaks.size < n_sources:
        warnings.warn(f"only {peaks.size} spectral peaks for {n_sources} sources")
    top = peaks[np.argsort(-spec[peaks], kind="stable")][:n_sources]
    return np.sort(np.degrees(np.arcsin(sines[top])))


def music_ss_estimate(y: np.ndarray, B: np.ndarray, geometry: ArrayGeometry,
                      n_sources: int, grid: AngleGrid) -> np.ndarray:
    """Single-snapshot MUSIC via the Hankel matrix of the recovered signal.

    Builds the ceil(N/2)-row Hankel matrix of z_hat = pinv(B^T) y, takes
    the noise subspace from its SVD, and picks the n_sources largest
    pseudospectrum peaks on the grid.  Requires N >= 2K+1 so the Hankel
    matrix has both enough rows and a nonempty noise subspace.
    """
    if n_sources == 0:
        return np.array([])
    n = geometry.n_elements
    if n < 2 * n_sources + 1:
        raise ValueError(f"need N >= 2K+1 elements, got N={n}, K={n_sources}")
    z = np.linalg.pinv(B.T) @ y
    m = (n + 1) // 2
    cols = n - m + 1
    hankel = np.empty((m, cols), dtype=complex)
    for i in range(m):
        hankel[i] = z[i:i + cols]
    u, _, _ = np.linalg.svd(hankel)
    noise = u[:, n_sources:]
    sub = ArrayGeometry(geometry.positions[:m])
    a = steering_vector(sub, grid.angles())
    denom = np.sum(np.abs(noise.conj().T @ a) ** 2, axis=0)
    denom = np.maximum(denom, 1e-300)
    pseudo = 1.0 / denom
    peaks = _local_maxima(pseudo)
    if peaks.size < n_sources:
        warnings.warn(f"only {peaks.size} pseudospectrum peaks for {n_sources} sources")
    top = peaks[np.argsort(-pseudo[peaks], kind="stable")][:n_sources]
    return np.sort(grid.angles()[top])
