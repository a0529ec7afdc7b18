"""Squeezed-vacuum covariance propagation and homodyne statistics on mode 1.

Conventions: vacuum variance 1/2 per quadrature, quadratures ordered
(x_1..x_M, p_1..p_M). The probe enters mode 1 (index 0) with its
anti-squeezed axis along x.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .netcore import as_unitary


class GaussianError(ValueError):
    pass


@dataclass(frozen=True)
class SqueezedProbe:
    """Single-mode squeezed vacuum with squeezing ``r``; mean photon number N = sinh^2 r."""

    r: float

    def __post_init__(self):
        if not np.isfinite(self.r) or self.r < 0:
            raise GaussianError(f"squeezing parameter must be finite and >= 0, got {self.r}")

    @classmethod
    def from_photons(cls, N: float) -> "SqueezedProbe":
        if N < 0:
            raise GaussianError("mean photon number must be >= 0")
        return cls(float(np.arcsinh(np.sqrt(N))))

    @property
    def N(self) -> float:
        return float(np.sinh(self.r) ** 2)


@dataclass(frozen=True)
class HomodyneModel:
    """Zero-mean Gaussian outcome law of the x_theta quadrature with variance ``variance``."""

    theta: float
    variance: float

    def __post_init__(self):
        if not self.variance > 0:
            raise GaussianError(f"homodyne variance must be positive, got {self.variance}")

    def density(self, x):
        return outcome_density(x, self.variance)

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        return sample_outcomes(self.variance, count, rng)


def symplectic_form(M: int) -> np.ndarray:
    z, one = np.zeros((M, M)), np.eye(M)
    return np.block([[z, one], [-one, z]])


def symplectic_embed(u) -> np.ndarray:
    """Real orthogonal-symplectic image R = [[Re u, -Im u], [Im u, Re u]] of a unitary."""
    u = as_unitary(u)
    re, im = u.real, u.imag
    return np.block([[re, -im], [im, re]])


def input_covariance(M: int, probe: SqueezedProbe) -> np.ndarray:
    """Covariance of squeezed vacuum on mode 1 and vacuum elsewhere."""
    diag = np.full(2 * M, 0.5)
    diag[0] = 0.5 * np.exp(2 * probe.r)
    diag[M] = 0.5 * np.exp(-2 * probe.r)
    return np.diag(diag)


def propagate_covariance(u, probe: SqueezedProbe) -> np.ndarray:
    """Gamma = R Gamma_0 R^T for the passive network ``u``."""
    R = symplectic_embed(u)
    gamma = R @ input_covariance(R.shape[0] // 2, probe) @ R.T
    return 0.5 * (gamma + gamma.T)


def symplectic_eigenvalues(gamma) -> np.ndarray:
    """Symplectic spectrum (each value once) of a 2M x 2M covariance matrix."""
    gamma = np.asarray(gamma, dtype=float)
    M = gamma.shape[0] // 2
    ev = np.abs(np.linalg.eigvals(1j * symplectic_form(M) @ gamma))
    return np.sort(ev)[::2]


def validate_covariance(gamma, tol: float = 1e-9) -> np.ndarray:
    gamma = np.asarray(gamma, dtype=float)
    if gamma.ndim != 2 or gamma.shape[0] != gamma.shape[1] or gamma.shape[0] % 2:
        raise GaussianError(f"covariance must be 2M x 2M, got {gamma.shape}")
    if np.max(np.abs(gamma - gamma.T)) > 1e-12 * max(1.0, np.max(np.abs(gamma))):
        raise GaussianError("covariance matrix is not symmetric")
    if np.min(np.linalg.eigvalsh(gamma)) <= 0:
        raise GaussianError("covariance matrix is not positive definite")
    if np.min(symplectic_eigenvalues(gamma)) < 0.5 - tol:
        raise GaussianError("covariance matrix violates the uncertainty relation")
    return gamma


def mean_photon_number(gamma) -> float:
    """Total mean photon number Tr(Gamma)/2 - M/2 of a zero-mean state."""
    gamma = np.asarray(gamma)
    return float(np.trace(gamma) / 2 - gamma.shape[0] / 4)


def reduced_sigma(gamma) -> np.ndarray:
    """2x2 covariance of mode 1: rows/cols (x_1, p_1)."""
    gamma = np.asarray(gamma)
    M = gamma.shape[0] // 2
    idx = [0, M]
    return gamma[np.ix_(idx, idx)].copy()


def quadrature_variance(sigma, theta: float) -> float:
    """(O_theta^T sigma O_theta)_11, the variance of x_theta = cos(theta) x + sin(theta) p."""
    c, s = np.cos(theta), np.sin(theta)
    o = np.array([[c, -s], [s, c]])
    return float((o.T @ np.asarray(sigma) @ o)[0, 0])


def homodyne_variance(u11: complex, probe: SqueezedProbe, theta: float) -> float:
    """Delta = 1/2 (1 + |u11|^2 (cosh 2r - 1) + Re[exp(-2i theta) u11^2] sinh 2r).

    Evaluated in the equivalent cancellation-free form

        1/2 [(1 - |u11|^2) + |u11|^2 e^{-2r} + 2 sinh(2r) Re(u11 e^{-i theta})^2]

    so it stays accurate when Delta ~ 1/N at large squeezing.
    """
    p = abs(u11) ** 2
    if p > 1 + 1e-9:
        raise GaussianError(f"|u11|^2 = {p} exceeds 1: non-unitary pipeline")
    p = min(p, 1.0)
    a = (u11 * np.exp(-1j * theta)).real
    r = probe.r
    return 0.5 * ((1.0 - p) + p * np.exp(-2 * r) + 2.0 * np.sinh(2 * r) * a * a)


def homodyne_variance_derivative(u11: complex, du11: complex, probe: SqueezedProbe,
                                 theta: float) -> float:
    """d Delta / d phi given the amplitude derivative ``du11`` (theta held fixed)."""
    dp = 2.0 * (np.conj(u11) * du11).real
    a = (u11 * np.exp(-1j * theta)).real
    da = (du11 * np.exp(-1j * theta)).real
    r = probe.r
    return 0.5 * (-dp + dp * np.exp(-2 * r) + 4.0 * np.sinh(2 * r) * a * da)


def outcome_density(x, variance: float):
    if not variance > 0:
        raise GaussianError(f"variance must be positive, got {variance}")
    x = np.asarray(x, dtype=float)
    return np.exp(-x * x / (2 * variance)) / np.sqrt(2 * np.pi * variance)


def sample_outcomes(variance: float, count: int, rng: np.random.Generator) -> np.ndarray:
    if not variance > 0:
        raise GaussianError(f"variance must be positive, got {variance}")
    return np.sqrt(variance) * rng.standard_normal(count)


def characteristic_function(xi, theta: float, sigma) -> np.ndarray:
    """chi(xi) = exp(-1/2 xi_theta^T sigma xi_theta), xi_theta = xi (cos theta, sin theta)."""
    xi = np.asarray(xi, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    quad = sigma[0, 0] * c * c + (sigma[0, 1] + sigma[1, 0]) * c * s + sigma[1, 1] * s * s
    return np.exp(-0.5 * quad * xi * xi)
