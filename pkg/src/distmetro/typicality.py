"""Haar statistics of the pre-factor f(U, G) = ((U^dagger G U)_11)^2.

f depends on U only through its first column u = U e_1, which for Haar U is
uniform on the unit sphere of C^M; the Monte Carlo here samples that column
directly (``netcore.haar_column``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import lgamma

import numpy as np
from scipy import integrate, stats

from .montecarlo import RunningMoments, merge_all, run_chunked
from .netcore import as_hermitian, haar_column, haar_unitary, opnorm

LEVY_C = 9 * np.pi**3
# A = 1 / (72 pi^3): Levy's n eps^2 / (C L^2) with n = 2M and L = 4 |G|^2
LEVY_A = 1.0 / (72 * np.pi**3)


class TypicalityError(ValueError):
    pass


def _spectrum(G) -> np.ndarray:
    """Eigenvalues of G, or G itself when it is already a 1-D spectrum."""
    G = np.asarray(G)
    if G.ndim == 1:
        return G.astype(float)
    return np.linalg.eigvalsh(as_hermitian(G))


def prefactor(U, G, tol: float = 1e-10) -> float:
    U = np.asarray(U)
    G = np.asarray(G)
    if U.shape != G.shape:
        raise TypicalityError(f"dimension mismatch: {U.shape} vs {G.shape}")
    u = U[:, 0]
    val = np.vdot(u, G @ u)
    if abs(val.imag) > tol:
        raise TypicalityError(f"(U^dagger G U)_11 has imaginary part {val.imag:.2e}")
    return float(val.real) ** 2


def prefactor_columns(u, G) -> np.ndarray:
    """Vectorized f for a stack of first columns ``u`` (shape (n, M)).

    ``G`` may be a Hermitian matrix or a 1-D spectrum (then G = diag(spectrum)).
    """
    u = np.asarray(u)
    G = np.asarray(G)
    if G.ndim == 1:
        q = (np.abs(u) ** 2) @ G
    else:
        q = np.einsum("ni,ij,nj->n", u.conj(), G, u).real
    return q * q


def mean_prefactor(G, M: int | None = None) -> float:
    """E[f] = (Tr G^2 + (Tr G)^2) / (M (M+1)) over Haar U."""
    g = _spectrum(G)
    M = g.size if M is None else M
    if g.size != M:
        raise TypicalityError("spectrum size does not match M")
    return float((np.sum(g * g) + np.sum(g) ** 2) / (M * (M + 1)))


def jensen_bound(G, M: int | None = None) -> float:
    """(Tr G / M)^2 <= E[f]."""
    g = _spectrum(G)
    M = g.size if M is None else M
    return float((np.sum(g) / M) ** 2)


@dataclass(frozen=True)
class TwoEigSpec:
    """Spectrum with ``k`` copies of g1 and M - k copies of g2, g1 >= g2 >= 0."""

    g1: float
    g2: float
    k: int
    M: int

    def __post_init__(self):
        if not self.g1 >= self.g2 >= 0:
            raise TypicalityError("need g1 >= g2 >= 0")
        if not 1 <= self.k <= self.M - 1:
            raise TypicalityError("need 1 <= k <= M - 1")

    @classmethod
    def from_spectrum(cls, g) -> "TwoEigSpec":
        g = np.asarray(g, dtype=float)
        vals = np.unique(np.round(g, 12))
        if vals.size > 2:
            raise TypicalityError("spectrum has more than two distinct eigenvalues")
        g1, g2 = float(vals.max()), float(vals.min())
        k = int(np.sum(np.isclose(g, g1))) if g1 != g2 else g.size // 2
        return cls(g1, g2, k, g.size)

    @property
    def dg(self) -> float:
        return self.g1 - self.g2

    @property
    def is_degenerate(self) -> bool:
        return self.dg == 0

    @property
    def log_binom(self) -> float:
        return lgamma(self.M) - lgamma(self.k) - lgamma(self.M - self.k)

    @property
    def C(self) -> float:
        if self.is_degenerate:
            raise TypicalityError("degenerate spectrum: point mass, no density")
        return float(np.exp(self.log_binom - np.log(2.0) - (self.M - 1) * np.log(self.dg)))

    def spectrum(self) -> np.ndarray:
        return np.array([self.g1] * self.k + [self.g2] * (self.M - self.k))


def two_eig_pdf(x, spec: TwoEigSpec):
    """Density C (g1 - sqrt x)^(M-k-1) (sqrt x - g2)^(k-1) / sqrt x on sqrt x in [g2, g1].

    Evaluated in log space; exponents reach ~M, so the constant C alone can be
    astronomically large.
    """
    if spec.is_degenerate:
        raise TypicalityError("degenerate spectrum: f is the point mass g1^2")
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    rx = np.sqrt(np.clip(x, 0, None))
    inside = (rx > spec.g2) & (rx < spec.g1) & (x > 0)
    a, b = spec.M - spec.k - 1, spec.k - 1
    r = rx[inside]
    logp = (spec.log_binom - np.log(2.0) - (spec.M - 1) * np.log(spec.dg)
            - np.log(r))
    if a:
        logp = logp + a * np.log(spec.g1 - r)
    if b:
        logp = logp + b * np.log(r - spec.g2)
    out[inside] = np.exp(logp)
    return out if out.ndim else float(out)


def two_eig_bin_probabilities(edges, spec: TwoEigSpec) -> np.ndarray:
    """Integral of ``two_eig_pdf`` over each bin, by adaptive quadrature.

    The variable change x = s^2 removes the 1/sqrt(x) endpoint singularity.
    """
    edges = np.asarray(edges, dtype=float)

    def dens_s(s):
        return float(two_eig_pdf(s * s, spec)) * 2 * s

    out = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        a = max(np.sqrt(max(lo, 0.0)), spec.g2)
        b = min(np.sqrt(max(hi, 0.0)), spec.g1)
        if b <= a:
            out.append(0.0)
            continue
        val, _ = integrate.quad(dens_s, a, b, limit=200, epsabs=1e-13, epsrel=1e-11)
        out.append(val)
    return np.array(out)


def cap_weight_pdf(t, k: int, M: int):
    """q(t) = (M-1)! / ((k-1)! (M-k-1)!) t^(k-1) (1-t)^(M-k-1) on [0, 1]."""
    if not 1 <= k <= M - 1:
        raise TypicalityError("need 1 <= k <= M - 1")
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = (t > 0) & (t < 1)
    tt = t[inside]
    logq = lgamma(M) - lgamma(k) - lgamma(M - k) + (k - 1) * np.log(tt) + (M - k - 1) * np.log1p(-tt)
    out[inside] = np.exp(logq)
    # closed endpoints where the density is finite and non-zero
    if k == 1:
        out[t == 0] = M - 1
    if k == M - 1:
        out[t == 1] = M - 1
    return out if out.ndim else float(out)


def concentration_bound(eps: float, M: int, opnorm_G: float) -> float:
    """2 exp(-A M eps^2 / |G|^4); values >= 1 are vacuous."""
    if not eps > 0:
        raise TypicalityError("eps must be positive")
    return float(2.0 * np.exp(-LEVY_A * M * eps**2 / opnorm_G**4))


def lipschitz_constant(G) -> float:
    """4 |G|^2, the Lipschitz constant of f on the unit sphere."""
    return 4.0 * opnorm(_spectrum(G)) ** 2


def sphere_embedding(u) -> np.ndarray:
    """Map complex u in C^M to real x in R^2M with x_(2j-1) = Re u_j, x_(2j) = Im u_j."""
    u = np.asarray(u)
    x = np.empty(u.shape[:-1] + (2 * u.shape[-1],))
    x[..., 0::2] = u.real
    x[..., 1::2] = u.imag
    return x


def prefactor_gradient(x, g) -> np.ndarray:
    """Gradient 4 (x^T Gt x) Gt x of f(x) = (x^T Gt x)^2, Gt = diag(g1, g1, ..., gM, gM)."""
    gt = np.repeat(np.asarray(g, dtype=float), 2)
    x = np.asarray(x, dtype=float)
    q = np.sum(gt * x * x, axis=-1, keepdims=True)
    return 4.0 * q * gt * x


def max_gradient_norm(g, n: int, rng: np.random.Generator) -> float:
    """Largest |grad f| over ``n`` uniform points of S^(2M-1) plus the extremal basis point."""
    g = np.asarray(g, dtype=float)
    x = rng.standard_normal((n, 2 * g.size))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    best = float(np.max(np.linalg.norm(prefactor_gradient(x, g), axis=1)))
    e = np.zeros(2 * g.size)
    e[2 * int(np.argmax(np.abs(g)))] = 1.0
    return max(best, float(np.linalg.norm(prefactor_gradient(e, g))))


@dataclass
class PrefactorStats:
    M: int
    spectrum: np.ndarray
    samples: np.ndarray
    mean_mc: float
    stderr_mc: float
    std_mc: float
    mean_analytic: float
    jensen_bound: float
    opnorm: float

    def to_dict(self) -> dict:
        return {
            "M": self.M,
            "n_samples": int(self.samples.size),
            "spectrum": [float(v) for v in self.spectrum],
            "mean_mc": self.mean_mc,
            "stderr_mc": self.stderr_mc,
            "std_mc": self.std_mc,
            "mean_analytic": self.mean_analytic,
            "jensen_bound": self.jensen_bound,
            "opnorm": self.opnorm,
        }


def sample_prefactor(G, n: int, seed: int, chunk: int = 20_000, threads: int | None = None,
                     full_unitary: bool = False) -> PrefactorStats:
    """Monte Carlo of f over Haar U, in seeded chunks merged by running moments.

    ``full_unitary=True`` draws whole Haar matrices instead of first columns
    (same law, O(M^3) per draw).
    """
    G = np.asarray(G)
    spec = _spectrum(G)
    M = spec.size
    op = float(np.max(np.abs(spec)))

    def work(size, rng):
        if full_unitary:
            u = haar_unitary(M, rng, size=size)[:, :, 0]
        else:
            u = haar_column(M, rng, size=size)
        f = prefactor_columns(u, G if G.ndim == 2 else spec)
        return f, RunningMoments.from_samples(f)

    parts = run_chunked(work, seed, n, chunk, threads)
    samples = np.concatenate([p[0] for p in parts])
    mom = merge_all(p[1] for p in parts)
    return PrefactorStats(
        M=M, spectrum=spec, samples=samples,
        mean_mc=float(mom.mean), stderr_mc=float(mom.stderr), std_mc=float(mom.std),
        mean_analytic=mean_prefactor(spec), jensen_bound=jensen_bound(spec), opnorm=op,
    )


def histogram(samples, spec: TwoEigSpec, bins: int = 50):
    """Density-normalized histogram on equal-width bins over [g2^2, g1^2]."""
    edges = np.linspace(spec.g2**2, spec.g1**2, bins + 1)
    counts, _ = np.histogram(samples, bins=edges)
    width = np.diff(edges)
    return edges, counts / (counts.sum() * width)


@dataclass(frozen=True)
class ChiSquareResult:
    statistic: float
    dof: int
    pvalue: float
    bins_used: int


def chi_square_gof(samples, spec: TwoEigSpec, bins: int = 50, min_expected: float = 5.0) -> ChiSquareResult:
    """Pearson test of ``samples`` against the two-eigenvalue density.

    Starts from ``bins`` equal-width bins over [g2^2, g1^2] and merges
    neighbours until every bin expects at least ``min_expected`` counts.
    """
    samples = np.asarray(samples)
    edges = np.linspace(spec.g2**2, spec.g1**2, bins + 1)
    counts, _ = np.histogram(samples, bins=edges)
    probs = two_eig_bin_probabilities(edges, spec)
    n = samples.size
    obs, exp = [], []
    acc_o = acc_e = 0.0
    for o, p in zip(counts, probs):
        acc_o += o
        acc_e += n * p
        if acc_e >= min_expected:
            obs.append(acc_o)
            exp.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0 or acc_o > 0:
        if obs:
            obs[-1] += acc_o
            exp[-1] += acc_e
        else:
            obs.append(acc_o)
            exp.append(acc_e)
    obs, exp = np.array(obs), np.array(exp)
    if obs.size < 2:
        raise TypicalityError("too few populated bins for a chi-square test")
    stat = float(np.sum((obs - exp) ** 2 / exp))
    dof = obs.size - 1
    return ChiSquareResult(stat, dof, float(stats.chi2.sf(stat, dof)), int(obs.size))


def tail_frequency(samples, center: float, eps: float) -> float:
    return float(np.mean(np.abs(np.asarray(samples) - center) >= eps))


# ---------------------------------------------------------------- Haar moments

@dataclass(frozen=True)
class MomentRow:
    name: str
    estimate: float
    exact: float
    stderr: float
    z: float


@dataclass
class MomentSuite:
    M: int
    n: int
    rows: list[MomentRow] = field(default_factory=list)
    z_fail: float = 5.0

    @property
    def passed(self) -> bool:
        return all(abs(r.z) <= self.z_fail for r in self.rows)

    def row(self, name: str) -> MomentRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "M": self.M, "n": self.n, "z_fail": self.z_fail, "passed": self.passed,
            "rows": [r.__dict__ for r in self.rows],
        }


# Lemma moment families; the first six names are the entry-level moments.
MOMENT_FAMILIES = (
    "E|U11|^2",
    "E|U11|^4",
    "E|U11|^2|U21|^2",
    "E|U11|^2|U12|^2",
    "E|U11|^2|U22|^2",
    "E[U11 U22 conj(U12) conj(U21)]",
)


def _moment_quantities(U, A):
    u11 = U[:, 0, 0]
    a11 = np.abs(u11) ** 2
    cols = {"E|U11|^2": a11, "E|U11|^4": a11**2}
    B = np.einsum("nki,kl,nlj->nij", U.conj(), A, U)
    M = U.shape[-1]
    cols["Re E(U^+AU)_11"] = B[:, 0, 0].real
    cols["Im E(U^+AU)_11"] = B[:, 0, 0].imag
    cols["Re E(U^+AU)_11^2"] = (B[:, 0, 0] ** 2).real
    cols["Im E(U^+AU)_11^2"] = (B[:, 0, 0] ** 2).imag
    if M >= 2:
        u21, u12, u22 = U[:, 1, 0], U[:, 0, 1], U[:, 1, 1]
        cols["E|U11|^2|U21|^2"] = a11 * np.abs(u21) ** 2
        cols["E|U11|^2|U12|^2"] = a11 * np.abs(u12) ** 2
        cols["E|U11|^2|U22|^2"] = a11 * np.abs(u22) ** 2
        w = u11 * u22 * np.conj(u12) * np.conj(u21)
        cols["E[U11 U22 conj(U12) conj(U21)]"] = w.real
        cols["Im E[U11 U22 conj(U12) conj(U21)]"] = w.imag
        cols["Re E(U^+AU)_12"] = B[:, 0, 1].real
        cols["Im E(U^+AU)_12"] = B[:, 0, 1].imag
        cols["Re E(U^+AU)_12^2"] = (B[:, 0, 1] ** 2).real
        cols["Im E(U^+AU)_12^2"] = (B[:, 0, 1] ** 2).imag
    return cols


def _moment_exact(M: int, A) -> dict[str, float]:
    trA = np.trace(A)
    second = (np.trace(A @ A) + trA**2) / (M * (M + 1))
    exact = {
        "E|U11|^2": 1 / M,
        "E|U11|^4": 2 / (M * (M + 1)),
        "Re E(U^+AU)_11": (trA / M).real,
        "Im E(U^+AU)_11": (trA / M).imag,
        "Re E(U^+AU)_11^2": second.real,
        "Im E(U^+AU)_11^2": second.imag,
    }
    if M >= 2:
        exact.update({
            "E|U11|^2|U21|^2": 1 / (M * (M + 1)),
            "E|U11|^2|U12|^2": 1 / (M * (M + 1)),
            "E|U11|^2|U22|^2": 1 / (M * M - 1),
            "E[U11 U22 conj(U12) conj(U21)]": -1 / (M * (M * M - 1)),
            "Im E[U11 U22 conj(U12) conj(U21)]": 0.0,
            "Re E(U^+AU)_12": 0.0,
            "Im E(U^+AU)_12": 0.0,
            "Re E(U^+AU)_12^2": 0.0,
            "Im E(U^+AU)_12^2": 0.0,
        })
    return {k: float(v) for k, v in exact.items()}


def haar_moment_suite(M: int, n: int, seed: int, chunk: int = 100_000,
                      threads: int | None = None, z_fail: float = 5.0,
                      min_samples: int = 10_000) -> MomentSuite:
    """Compare Haar Monte Carlo moments of U(M) with the fourth-order lemma values.

    Also checks E[(U^dagger A U)_ij] and E[(U^dagger A U)_ij^2] for a random
    complex test matrix A (drawn from the same seed).
    """
    if n < min_samples:
        raise TypicalityError(f"need at least {min_samples} samples")
    ss = np.random.SeedSequence(seed)
    a_seq, mc_seq = ss.spawn(2)
    arng = np.random.default_rng(a_seq)
    A = (arng.standard_normal((M, M)) + 1j * arng.standard_normal((M, M))) / np.sqrt(2)
    exact = _moment_exact(M, A)
    names = list(exact)

    def work(size, rng):
        U = haar_unitary(M, rng, size=size)
        cols = _moment_quantities(U, A)
        return RunningMoments.from_samples(np.column_stack([cols[k] for k in names]))

    mc_seed = int(mc_seq.generate_state(1, dtype=np.uint64)[0])
    mom = merge_all(run_chunked(work, mc_seed, n, chunk, threads))
    suite = MomentSuite(M=M, n=n, z_fail=z_fail)
    for i, name in enumerate(names):
        est, se, ex = float(mom.mean[i]), float(mom.stderr[i]), exact[name]
        # constant statistics (M = 1) leave only rounding in the standard error
        floor = 1e-12 * (1.0 + abs(ex))
        if abs(est - ex) <= floor:
            z = 0.0
        elif se > 0:
            z = (est - ex) / se
        else:
            z = float("inf")
        suite.rows.append(MomentRow(name, est, ex, se, float(z)))
    return suite
