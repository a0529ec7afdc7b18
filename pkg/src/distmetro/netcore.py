"""Passive linear networks: unitaries, parameterized families and their generators.

Matrices are plain complex ``numpy`` arrays. ``as_unitary`` / ``as_hermitian``
validate and return read-only copies, which is how the rest of the package
treats a matrix as an immutable value.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

UNITARITY_TOL = 1e-10
HERMITICITY_TOL = 1e-10
# looser budget for products of several validated factors
CHAIN_TOL = 1e-9


class NetworkError(ValueError):
    """Raised for malformed matrices, families or mesh descriptions."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex, copy=True)
    a.setflags(write=False)
    return a


def _square(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise NetworkError(f"{name} must be a non-empty square matrix, got shape {a.shape}")
    return a


def unitarity_error(a) -> float:
    """Return ``max |A^dagger A - 1|``."""
    a = np.asarray(a)
    return float(np.max(np.abs(a.conj().T @ a - np.eye(a.shape[0]))))


def check_unitary(a, tol: float = UNITARITY_TOL) -> bool:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    return unitarity_error(a) <= tol


def as_unitary(a, tol: float = UNITARITY_TOL) -> np.ndarray:
    """Validate ``a`` as an M x M unitary and return a read-only complex copy."""
    a = _square(a, "unitary")
    err = unitarity_error(a)
    if err > tol:
        raise NetworkError(f"matrix is not unitary: max|U^dagger U - 1| = {err:.3e} > {tol:.1e}")
    return _frozen(a)


def as_hermitian(a, tol: float = HERMITICITY_TOL) -> np.ndarray:
    a = _square(a, "hermitian")
    err = float(np.max(np.abs(a - a.conj().T)))
    if err > tol:
        raise NetworkError(f"matrix is not Hermitian: max|G - G^dagger| = {err:.3e} > {tol:.1e}")
    return _frozen(a)


def adjoint(a) -> np.ndarray:
    return _frozen(np.asarray(a).conj().T)


def compose(a, b, tol: float = CHAIN_TOL) -> np.ndarray:
    """Matrix product ``a @ b`` of two unitaries of equal size."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise NetworkError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return as_unitary(a @ b, tol=tol)


@dataclass(frozen=True)
class NetworkFamily:
    """A map phi -> U_phi on ``dim`` modes.

    ``analytic_generator``, when given, must return G_phi = i U^dagger dU/dphi.
    """

    dim: int
    evaluate: Callable[[float], np.ndarray]
    analytic_generator: Optional[Callable[[float], np.ndarray]] = None
    label: str = ""

    def __call__(self, phi: float) -> np.ndarray:
        return self.evaluate(phi)


def make_phase_distributed_family(M: int, weights: Sequence[float]) -> NetworkFamily:
    """U_phi = diag(exp(i w_j phi)): phi spread over the modes with weights w."""
    w = np.asarray(weights, dtype=float)
    if M < 1:
        raise NetworkError("M must be >= 1")
    if w.shape != (M,):
        raise NetworkError(f"expected {M} weights, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise NetworkError("weights must be finite")

    def evaluate(phi: float) -> np.ndarray:
        return _frozen(np.diag(np.exp(1j * w * phi)))

    gen = _frozen(np.diag(-w.astype(complex)))

    return NetworkFamily(
        dim=M,
        evaluate=evaluate,
        analytic_generator=lambda phi: gen,
        label=f"phase-distributed{tuple(w.tolist())}",
    )


@dataclass(frozen=True)
class MeshElement:
    """A phase shift on ``modes[0]`` followed by a beamsplitter on ``modes``.

    The 2x2 block acting on (modes[0], modes[1]) is

        [[sqrt(T), i sqrt(1-T)], [i sqrt(1-T), sqrt(T)]] @ diag(exp(i phase), 1)

    so ``transmissivity=1`` gives a bare phase shifter.
    """

    modes: tuple[int, int]
    transmissivity: float = 0.5
    phase: float = 0.0


def _element_block(t: float, phase: float) -> np.ndarray:
    st, rt = np.sqrt(t), np.sqrt(1.0 - t)
    bs = np.array([[st, 1j * rt], [1j * rt, st]])
    return bs * np.array([np.exp(1j * phase), 1.0])


def _embed(M: int, modes: tuple[int, int], block: np.ndarray) -> np.ndarray:
    out = np.eye(M, dtype=complex)
    i, j = modes
    out[np.ix_([i, j], [i, j])] = block
    return out


def make_beamsplitter_mesh_family(
    M: int,
    mesh_spec: Sequence[MeshElement | tuple],
    phi_slots: Sequence[tuple[int, float]] | dict[int, float] = (),
) -> NetworkFamily:
    """Ordered product of beamsplitter/phase elements, element 0 acting first.

    ``phi_slots`` maps an element index to a weight; phi * weight is added to
    that element's phase. The analytic generator is provided.
    """
    if M < 2:
        raise NetworkError("a beamsplitter mesh needs M >= 2")
    elements = [e if isinstance(e, MeshElement) else MeshElement(*e) for e in mesh_spec]
    for n, e in enumerate(elements):
        i, j = e.modes
        if not (0 <= i < M and 0 <= j < M) or i == j:
            raise NetworkError(f"element {n}: invalid port pair {e.modes} for M={M}")
        if not 0.0 <= e.transmissivity <= 1.0:
            raise NetworkError(f"element {n}: transmissivity {e.transmissivity} outside [0, 1]")
    slots = dict(phi_slots)
    for s in slots:
        if not 0 <= s < len(elements):
            raise NetworkError(f"invalid phi slot index {s} (mesh has {len(elements)} elements)")

    def blocks(phi: float) -> list[np.ndarray]:
        return [
            _embed(M, e.modes, _element_block(e.transmissivity, e.phase + slots.get(n, 0.0) * phi))
            for n, e in enumerate(elements)
        ]

    def evaluate(phi: float) -> np.ndarray:
        u = np.eye(M, dtype=complex)
        for b in blocks(phi):
            u = b @ u
        return _frozen(u)

    def generator(phi: float) -> np.ndarray:
        bs = blocks(phi)
        # prefix[n] = B_{n-1} ... B_0
        prefix = [np.eye(M, dtype=complex)]
        for b in bs:
            prefix.append(b @ prefix[-1])
        u = prefix[-1]
        du = np.zeros((M, M), dtype=complex)
        suffix = np.eye(M, dtype=complex)
        for n in range(len(bs) - 1, -1, -1):
            if n in slots:
                i = elements[n].modes[0]
                proj = np.zeros((M, M), dtype=complex)
                proj[i, i] = 1j * slots[n]
                # d/dphi of BS @ Phase is BS @ Phase @ (i w |i><i|)
                du += suffix @ bs[n] @ proj @ prefix[n]
            suffix = suffix @ bs[n]
        g = 1j * u.conj().T @ du
        return _frozen(0.5 * (g + g.conj().T))

    return NetworkFamily(dim=M, evaluate=evaluate, analytic_generator=generator,
                         label=f"mesh(M={M}, elements={len(elements)}, slots={sorted(slots)})")


def random_mesh_spec(M: int, depth: int, rng: np.random.Generator) -> list[MeshElement]:
    """Random nearest-neighbour mesh with ``depth`` layers (Clements-like brickwork)."""
    out = []
    for layer in range(depth):
        for i in range(layer % 2, M - 1, 2):
            out.append(MeshElement((i, i + 1), float(rng.uniform(0, 1)), float(rng.uniform(0, 2 * np.pi))))
    return out


def constant_family(u) -> NetworkFamily:
    u = as_unitary(u)
    zero = _frozen(np.zeros_like(u))
    return NetworkFamily(dim=u.shape[0], evaluate=lambda phi: u,
                         analytic_generator=lambda phi: zero, label="constant")


def generator(family: NetworkFamily, phi: float, step: float = 1e-5,
              use_analytic: bool = True) -> np.ndarray:
    """G_phi = i U^dagger dU/dphi (central differences unless an analytic form exists).

    Raises ``NetworkError`` if the finite-difference estimate is non-Hermitian
    beyond 1e-6 plus the O(step^2) truncation allowance before symmetrization.
    """
    if use_analytic and family.analytic_generator is not None:
        return as_hermitian(family.analytic_generator(phi))
    if step <= 0:
        raise NetworkError("step must be positive")
    u = np.asarray(family(phi))
    du = (np.asarray(family(phi + step)) - np.asarray(family(phi - step))) / (2 * step)
    g = 1j * u.conj().T @ du
    skew = float(np.max(np.abs(g - g.conj().T)))
    if skew > 1e-6 + 10.0 * step * step:
        raise NetworkError(
            f"finite-difference generator is non-Hermitian ({skew:.2e}); "
            "family may be discontinuous or step too large"
        )
    return _frozen(0.5 * (g + g.conj().T))


def haar_unitary(M: int, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """Haar-distributed unitary (or a stack of ``size`` of them).

    QR of a complex Ginibre matrix with the phases of diag(R) moved into Q.
    """
    if M < 1:
        raise NetworkError("M must be >= 1")
    shape = (M, M) if size is None else (size, M, M)
    z = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r, axis1=-2, axis2=-1)
    absd = np.abs(d)
    if np.any(absd == 0):
        # measure-zero event
        return haar_unitary(M, rng, size)
    q = q * (d / absd)[..., None, :]
    if size is None:
        return _frozen(q)
    return q


def haar_column(M: int, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """First column U e_1 of a Haar unitary: a uniform point on the unit sphere of C^M.

    Same law as ``haar_unitary(M, rng)[:, 0]`` at O(M) cost instead of O(M^3).
    Returns shape (M,) or (size, M).
    """
    if M < 1:
        raise NetworkError("M must be >= 1")
    shape = (M,) if size is None else (size, M)
    z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    norm = np.linalg.norm(z, axis=-1, keepdims=True)
    return z / norm


def opnorm(g) -> float:
    """Operator (spectral) norm of a Hermitian matrix, or max |g_j| of a 1-D spectrum."""
    g = np.asarray(g)
    if g.ndim == 1:
        return float(np.max(np.abs(g)))
    return float(np.max(np.abs(np.linalg.eigvalsh(g))))
