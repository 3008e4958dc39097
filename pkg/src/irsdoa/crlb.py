"""Fisher information and the Cramer-Rao lower bound for the coded-measurement model.

Sources are modeled as zero-mean circular complex Gaussian with covariance
D, so the single-snapshot measurement is y ~ CN(0, G) with

    G = (B^T A) D (B^T A)^H + sigma^2 I.

Fisher entries follow the Slepian-Bangs form F_ij = Tr{G^-1 dG_i G^-1 dG_j}
over the real parameters (theta_1..theta_K, psi).  The nuisance vector psi
holds the diagonal of D and/or sigma^2; B is known by design (the surface
codes are chosen by the operator) and is not a parameter.

Angles enter the Fisher matrix in radians; reported bounds are given in
both radians^2 and degrees^2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .signal_model import ArrayGeometry, steering_vector, steering_derivative

DEG = np.pi / 180.0

NUISANCE_SOURCE_POWER = "source_power"
NUISANCE_NOISE = "noise_variance"


@dataclass(frozen=True)
class CrlbModel:
    geometry: ArrayGeometry
    B: np.ndarray
    angles_deg: np.ndarray
    source_covariance: np.ndarray
    noise_variance: float
    nuisance: tuple = ()

    def __post_init__(self):
        ang = np.atleast_1d(np.asarray(self.angles_deg, dtype=float))
        D = np.asarray(self.source_covariance, dtype=complex)
        if D.shape != (ang.size, ang.size):
            raise ValueError("source covariance must be K x K")
        if np.linalg.norm(D - D.conj().T) > 1e-10 * max(1.0, np.linalg.norm(D)):
            raise ValueError("source covariance must be Hermitian")
        if np.min(np.linalg.eigvalsh(D)) < -1e-10:
            raise ValueError("source covariance must be positive semidefinite")
        if self.noise_variance <= 0:
            raise ValueError("noise variance must be positive")
        for item in self.nuisance:
            kind = item[0] if isinstance(item, tuple) else item
            if kind not in (NUISANCE_SOURCE_POWER, NUISANCE_NOISE):
                raise ValueError(f"unknown nuisance parameter {item!r}")
        object.__setattr__(self, "angles_deg", ang)
        object.__setattr__(self, "source_covariance", D)
        object.__setattr__(self, "B", np.asarray(self.B, dtype=complex))
        object.__setattr__(self, "nuisance", tuple(self.nuisance))

    @property
    def n_sources(self) -> int:
        return self.angles_deg.size

    @classmethod
    def with_all_nuisance(cls, geometry, B, angles_deg, source_covariance,
                          noise_variance) -> "CrlbModel":
        """Model treating every source power and the noise floor as unknown."""
        k = np.atleast_1d(np.asarray(angles_deg)).size
        nuis = tuple((NUISANCE_SOURCE_POWER, i) for i in range(k))
        nuis = nuis + (NUISANCE_NOISE,)
        return cls(geometry, B, angles_deg, source_covariance, noise_variance, nuis)


@dataclass(frozen=True)
class CrlbReport:
    fisher: np.ndarray
    crlb_theta_rad2: np.ndarray
    crlb_theta_deg2: np.ndarray
    conditioning: float
    method: str  # "schur" or "diagonal"

    @property
    def crlb_theta_deg(self) -> np.ndarray:
        """Per-angle standard-deviation bound in degrees."""
        return np.sqrt(self.crlb_theta_deg2)


def _measured_steering(model: CrlbModel) -> np.ndarray:
    return model.B.T @ steering_vector(model.geometry, model.angles_deg)


def covariance_G(model: CrlbModel) -> np.ndarray:
    """P x P measurement covariance (B^T A) D (B^T A)^H + sigma^2 I."""
    M = _measured_steering(model)
    G = M @ model.source_covariance @ M.conj().T
    G = 0.5 * (G + G.conj().T)
    return G + model.noise_variance * np.eye(M.shape[0])


def dG_dtheta(model: CrlbModel, k: int, omit_cos_factor: bool = False) -> np.ndarray:
    """Derivative of the covariance w.r.t. the k-th angle in radians."""
    if not 0 <= k < model.n_sources:
        raise IndexError(f"angle index {k} out of range")
    M = _measured_steering(model)
    dA = np.zeros_like(M)
    da = steering_derivative(model.geometry, model.angles_deg[k],
                             omit_cos_factor=omit_cos_factor)
    dA[:, k] = model.B.T @ da
    half = dA @ model.source_covariance @ M.conj().T
    return half + half.conj().T


def dG_dpsi(model: CrlbModel, j: int) -> np.ndarray:
    """Derivative of the covariance w.r.t. the j-th nuisance parameter."""
    if not 0 <= j < len(model.nuisance):
        raise IndexError(f"nuisance index {j} out of range")
    item = model.nuisance[j]
    P = model.B.shape[1]
    if item == NUISANCE_NOISE:
        return np.eye(P, dtype=complex)
    _, k = item
    M = _measured_steering(model)
    mk = M[:, k]
    return np.outer(mk, mk.conj())


def fisher_matrix(model: CrlbModel, omit_cos_factor: bool = False) -> np.ndarray:
    """Full Fisher matrix over (theta_radians..., nuisance...)."""
    G = covariance_G(model)
    evals = np.linalg.eigvalsh(G)
    if evals[0] <= 0:
        raise np.linalg.LinAlgError(
            f"covariance not positive definite (min eigenvalue {evals[0]:.3e})")
    Ginv = np.linalg.inv(G)
    derivs = [Ginv @ dG_dtheta(model, k, omit_cos_factor)
              for k in range(model.n_sources)]
    derivs += [Ginv @ dG_dpsi(model, j) for j in range(len(model.nuisance))]
    m = len(derivs)
    F = np.empty((m, m))
    for i in range(m):
        for j in range(i, m):
            F[i, j] = F[j, i] = float(np.real(np.trace(derivs[i] @ derivs[j])))
    return F


def crlb(model: CrlbModel, omit_cos_factor: bool = False) -> CrlbReport:
    """Angle variance bound, nuisance parameters marginalized.

    Primary route inverts the Schur complement of the angle block,
    F_tt - F_tp F_pp^-1 F_pt (equal to the angle diagonal of F^-1);
    if the nuisance block is numerically singular the looser diagonal
    surrogate 1/F_kk is reported instead.
    """
    F = fisher_matrix(model, omit_cos_factor)
    K = model.n_sources
    Ftt = F[:K, :K]
    method = "schur"
    if len(model.nuisance) == 0:
        schur = Ftt
    else:
        Fpp = F[K:, K:]
        Ftp = F[:K, K:]
        cond = np.linalg.cond(Fpp)
        if not np.isfinite(cond) or cond > 1e12:
            method = "diagonal"
        else:
            schur = Ftt - Ftp @ np.linalg.inv(Fpp) @ Ftp.T
    if method == "schur":
        evals = np.linalg.eigvalsh(0.5 * (schur + schur.T))
        if evals[0] <= 0:
            raise np.linalg.LinAlgError(
                "indefinite Schur complement; model is misspecified")
        var_rad2 = np.diag(np.linalg.inv(schur)).copy()
    else:
        var_rad2 = 1.0 / np.diag(Ftt)
    return CrlbReport(
        fisher=F,
        crlb_theta_rad2=var_rad2,
        crlb_theta_deg2=var_rad2 / DEG ** 2,
        conditioning=float(np.linalg.cond(F)),
        method=method,
    )
