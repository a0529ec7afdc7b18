"""One-sided refocusing: build the adapted stage from an estimate of U_phi.

Only the first row (output side) or first column (input side) of the adapted
stage is prescribed; the rest is a Householder completion.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .netcore import NetworkError, NetworkFamily, as_unitary, haar_unitary


class Side(str, Enum):
    INPUT = "input"
    OUTPUT = "output"


@dataclass(frozen=True)
class StagePair:
    V_in: np.ndarray
    V_out: np.ndarray
    adapted_side: Side
    epsilon: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "V_in", as_unitary(self.V_in))
        object.__setattr__(self, "V_out", as_unitary(self.V_out))
        object.__setattr__(self, "adapted_side", Side(self.adapted_side))
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.V_in.shape != self.V_out.shape:
            raise NetworkError("stage dimensions differ")


def complete_unitary(v) -> np.ndarray:
    """Unitary Q with Q e_1 = v, for a unit vector v.

    Uses the reflection H = 1 - 2 w w^dagger / |w|^2 with w = e_1 + e^{-i psi} v,
    psi = arg v_1, which maps e_1 to -e^{-i psi} v; that column is then set to
    v itself, a unit-modulus rephasing. |w|^2 >= 2, so nothing small is ever
    divided by, and v = e_1 yields the identity.
    """
    v = np.asarray(v, dtype=complex)
    norm = np.linalg.norm(v)
    if v.ndim != 1 or norm < 1e-12:
        raise NetworkError("prescribed row/column is empty or zero")
    v = v / norm
    psi = np.angle(v[0]) if v[0] != 0 else 0.0
    phase = np.exp(1j * psi)
    x = v / phase
    w = x.copy()
    w[0] += 1.0
    H = np.eye(v.size, dtype=complex) - 2.0 * np.outer(w, w.conj()) / np.vdot(w, w).real
    H[:, 0] = v
    return as_unitary(H)


def refocus_output(U_est, V_in) -> np.ndarray:
    """V_out whose first row is the first row of V_in^dagger U_est^dagger."""
    U_est, V_in = as_unitary(U_est), as_unitary(V_in)
    if U_est.shape != V_in.shape:
        raise NetworkError("dimension mismatch")
    v_in = (U_est @ V_in)[:, 0]
    return as_unitary(complete_unitary(v_in).conj().T)


def refocus_input(U_est, V_out) -> np.ndarray:
    """V_in whose first column is the first column of U_est^dagger V_out^dagger."""
    U_est, V_out = as_unitary(U_est), as_unitary(V_out)
    if U_est.shape != V_out.shape:
        raise NetworkError("dimension mismatch")
    col = U_est.conj().T @ V_out[0, :].conj()
    return complete_unitary(col)


def random_hermitian_direction(M: int, rng: np.random.Generator) -> np.ndarray:
    """Hermitized complex-Gaussian matrix scaled to operator norm 1."""
    a = rng.standard_normal((M, M)) + 1j * rng.standard_normal((M, M))
    h = np.triu(a, 1)
    h = h + h.conj().T + np.diag(rng.standard_normal(M))
    norm = np.max(np.abs(np.linalg.eigvalsh(h)))
    if norm == 0:
        return h
    return h / norm


def expi_hermitian(h, eps: float) -> np.ndarray:
    """exp(i eps H) via the eigendecomposition of Hermitian H."""
    vals, vecs = np.linalg.eigh(h)
    return (vecs * np.exp(1j * eps * vals)) @ vecs.conj().T


def perturb_stage(V, epsilon: float, rng: np.random.Generator) -> np.ndarray:
    """Return exp(i eps H) V with H a random norm-1 Hermitian direction."""
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    V = as_unitary(V)
    if epsilon == 0:
        return V
    H = random_hermitian_direction(V.shape[0], rng)
    return as_unitary(expi_hermitian(H, epsilon) @ V)


def ell_of(P: float, N: float) -> float:
    """Scattered-photon number ell = N (1 - P), clamped at 0."""
    if N <= 0:
        raise ValueError("N must be positive")
    return max(0.0, N * (1.0 - P))


def pre_estimate(phi_true: float, N: float, c: float, rng: np.random.Generator) -> float:
    """Shot-noise-limited classical estimate phi_true + Normal(0, c^2 / N)."""
    if c == 0:
        return float(phi_true)
    return float(phi_true + c / np.sqrt(N) * rng.standard_normal())


def build_stages(family: NetworkFamily, phi_est: float, side: Side | str,
                 fixed_stage) -> StagePair:
    """Adapt one side against U_{phi_est}; ``fixed_stage`` is the other, untouched side."""
    side = Side(side)
    U_est = family(phi_est)
    if side is Side.OUTPUT:
        return StagePair(V_in=fixed_stage, V_out=refocus_output(U_est, fixed_stage), adapted_side=side)
    return StagePair(V_in=refocus_input(U_est, fixed_stage), V_out=fixed_stage, adapted_side=side)


def random_fixed_stage(M: int, rng: np.random.Generator) -> np.ndarray:
    return haar_unitary(M, rng)


def refocus_residuals(M: int, n_pairs: int, rng: np.random.Generator) -> np.ndarray:
    """|1 - P| for exact refocusing on both sides over ``n_pairs`` random (U, stage) pairs."""
    out = np.empty((n_pairs, 2))
    for i in range(n_pairs):
        U, W = haar_unitary(M, rng), haar_unitary(M, rng)
        v_out = refocus_output(U, W)
        out[i, 0] = abs(1.0 - abs(v_out[0, :] @ U @ W[:, 0]) ** 2)
        v_in = refocus_input(U, W)
        out[i, 1] = abs(1.0 - abs(W[0, :] @ U @ v_in[:, 0]) ** 2)
    return out


@dataclass(frozen=True)
class PerturbationPoint:
    N: float
    epsilon: float
    one_minus_P: float
    ell: float


def perturbation_sweep(U, fixed_stage, Ns, side: Side | str = Side.OUTPUT, c: float = 1.0,
                       draws: int = 16, seed: int = 0) -> tuple[list[PerturbationPoint], float]:
    """Mean 1 - P when the exactly refocused stage is perturbed with eps = c / sqrt(N).

    Each N reuses the same ``draws`` Hermitian directions (common random
    numbers). Returns the points and the log-log slope of 1 - P against N.
    """
    side = Side(side)
    U = as_unitary(U)
    if side is Side.OUTPUT:
        V_in, V_out = fixed_stage, refocus_output(U, fixed_stage)
    else:
        V_in, V_out = refocus_input(U, fixed_stage), fixed_stage
    points = []
    for N in Ns:
        eps = c / np.sqrt(N)
        rng = np.random.default_rng(seed)
        loss = []
        for _ in range(draws):
            if side is Side.OUTPUT:
                amp = perturb_stage(V_out, eps, rng)[0, :] @ U @ V_in[:, 0]
            else:
                amp = V_out[0, :] @ U @ perturb_stage(V_in, eps, rng)[:, 0]
            loss.append(1.0 - abs(amp) ** 2)
        m = float(np.mean(loss))
        points.append(PerturbationPoint(float(N), float(eps), m, ell_of(1.0 - m, N)))
    slope = float(np.polyfit(np.log([p.N for p in points]), np.log([p.one_minus_P for p in points]), 1)[0])
    return points, slope
