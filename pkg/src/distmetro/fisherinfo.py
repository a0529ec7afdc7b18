"""Fisher information of the homodyne outcome law, by several independent routes.

* ``fisher_numeric``  - quadrature of p (d log p / d phi)^2 with finite differences in phi
* ``fisher_gaussian`` - 1/2 (dDelta / Delta)^2 with dDelta from the generator
* ``fisher_explicit`` - closed form in P, gamma and their derivatives
* ``fisher_asymptotic`` - large-N limit 8 rho(k, ell) (dgamma)^2 N^2
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.integrate import simpson

from .adaptive import Side, build_stages, ell_of
from .gaussian import SqueezedProbe, homodyne_variance, homodyne_variance_derivative
from .netcore import NetworkFamily, generator


class FisherError(ValueError):
    pass


class QuadratureError(FisherError):
    pass


@dataclass(frozen=True)
class FisherReport:
    P: float
    gamma: float
    dP: float
    dgamma: float
    Delta: float
    dDelta: float
    fN: float
    hN: float
    ell: float
    k: float
    F_numeric: float
    F_gaussian: float
    F_explicit: float
    F_asymptotic: float

    def to_dict(self) -> dict:
        return {key: float(val) for key, val in asdict(self).items()}


def transition(V_out, U_phi, V_in) -> tuple[complex, float, float]:
    """Return (u11, P, gamma) for the full interferometer V_out U_phi V_in."""
    V_out, U_phi, V_in = (np.asarray(a) for a in (V_out, U_phi, V_in))
    if not V_out.shape == U_phi.shape == V_in.shape:
        raise FisherError("dimension mismatch between stages and network")
    u11 = complex(V_out[0, :] @ U_phi @ V_in[:, 0])
    return u11, abs(u11) ** 2, float(np.angle(u11))


def phase_derivatives(family: NetworkFamily, V_in, V_out, phi: float,
                      step: float = 1e-3) -> tuple[float, float]:
    """Five-point-stencil (dP/dphi, dgamma/dphi), gamma unwrapped relative to phi.

    Truncation error is O(step^4) and rounding O(eps/step), so the default
    step keeps both near 1e-13.
    """
    if step <= 0:
        raise FisherError("step must be positive")
    u0, _, _ = transition(V_out, family(phi), V_in)
    amps = {m: transition(V_out, family(phi + m * step), V_in)[0] for m in (-2, -1, 1, 2)}
    weights = {-2: 1.0, -1: -8.0, 1: 8.0, 2: -1.0}
    dP = sum(w * abs(amps[m]) ** 2 for m, w in weights.items()) / (12 * step)
    dgam = 0.0
    for m, w in weights.items():
        jump = float(np.angle(amps[m] * np.conj(u0)))
        if abs(jump) > np.pi / 2:
            raise FisherError(f"phase jump {jump:.3f} rad across the stencil; reduce the step")
        dgam += w * jump
    return float(dP), dgam / (12 * step)


def amplitude_derivative(family: NetworkFamily, V_in, V_out, phi: float,
                         step: float = 1e-5) -> complex:
    """d u11 / d phi = -i (V_out U_phi G_phi V_in)_11."""
    U = np.asarray(family(phi))
    G = generator(family, phi, step)
    return complex(-1j * (np.asarray(V_out)[0, :] @ U @ G @ np.asarray(V_in)[:, 0]))


def fisher_gaussian(Delta: float, dDelta: float) -> float:
    if not Delta > 0:
        raise FisherError(f"variance must be positive, got {Delta}")
    return 0.5 * (dDelta / Delta) ** 2


def _f_and_h(P, gamma, N, theta):
    d = gamma - theta
    c2, s2 = np.cos(2 * d), np.sin(2 * d)
    s = np.sqrt(1.0 + 1.0 / N)
    cos2 = np.cos(d) ** 2
    # N (1 + c2 s) rewritten without the cancellation near c2 = -1
    fN = 2.0 * N * cos2 + c2 / (1.0 + s)
    hN = N * s2 * s
    sm1 = (1.0 / N) / (1.0 + s)
    # 1 + 2 P f, as a sum of non-negative terms
    denom = (1.0 - P) + P * (sm1 + 4.0 * cos2) / (1.0 + s) + 4.0 * P * N * cos2
    return fN, hN, denom


def fisher_explicit(P: float, dP: float, gamma: float, dgamma: float, N: float,
                    theta: float) -> tuple[float, float, float]:
    """F = 2 [(dP f - 2 P dgamma h) / (1 + 2 P f)]^2; returns (F, f(N), h(N))."""
    if not N > 0:
        raise FisherError("N must be positive")
    fN, hN, denom = _f_and_h(P, gamma, N, theta)
    if not denom > 0:
        raise FisherError("degenerate homodyne variance (1 + 2 P f = 0)")
    F = 2.0 * ((dP * fN - 2.0 * P * dgamma * hN) / denom) ** 2
    return float(F), float(fN), float(hN)


def fisher_numeric(family: NetworkFamily, V_in, V_out, probe: SqueezedProbe, theta: float,
                   phi: float, step: float | None = None, nodes: int = 4001,
                   span: float = 8.0, rtol: float = 1e-9) -> float:
    """Quadrature of p(x|phi) (d_phi log p(x|phi))^2 over |x| <= span sqrt(Delta).

    d_phi log p uses a five-point stencil of the exact Gaussian log-density.
    The phi-scale on which Delta varies ranges from O(1) down to ~1/N near the
    squeezed axis, so with ``step=None`` the stencil width is picked from a
    geometric ladder 1e-2, 2.5e-3, ... down to ~1e-5/(1+N): the estimate is
    taken where two successive widths agree best (truncation and rounding
    balanced).
    Simpson's rule on ``nodes`` points is compared with the same rule on every
    other node; a relative residual above ``rtol`` raises ``QuadratureError``.
    """
    if nodes < 2001:
        raise FisherError("at least 2001 quadrature nodes are required")
    if step is not None and step <= 0:
        raise FisherError("step must be positive")
    if nodes % 2 == 0:
        nodes += 1
    if nodes % 4 != 1:
        nodes += 2

    def delta_at(p):
        u11, _, _ = transition(V_out, family(p), V_in)
        return homodyne_variance(u11, probe, theta)

    d0 = delta_at(phi)
    x = np.linspace(-span, span, nodes) * np.sqrt(d0)
    weight = np.exp(-x * x / (2 * d0)) / np.sqrt(2 * np.pi * d0)

    def dlogp(dp):
        # log p(x|phi') - log p(x|phi), arranged so that rounding does not scale with x^2/Delta
        diff = dp - d0
        return -0.5 * np.log1p(diff / d0) + x * x * diff / (2.0 * d0 * dp)

    def integrate_at(h):
        dl = {m: dlogp(delta_at(phi + m * h)) for m in (-2, -1, 1, 2)}
        score = (dl[-2] - 8 * dl[-1] + 8 * dl[1] - dl[2]) / (12 * h)
        integrand = weight * score**2
        return simpson(integrand, x=x), simpson(integrand[::2], x=x[::2])

    if step is not None:
        fine, coarse = integrate_at(step)
    else:
        ladder = [1e-2]
        while ladder[-1] > 1e-5 / (1.0 + probe.N):
            ladder.append(ladder[-1] / 4)
        results = [integrate_at(h) for h in ladder]
        vals = [r[0] for r in results]
        gaps = [abs(a - b) for a, b in zip(vals[:-1], vals[1:])]
        best = int(np.argmin(gaps)) + 1
        fine, coarse = results[best]

    scale = max(abs(fine), 1e-300)
    if abs(fine - coarse) > rtol * scale and abs(fine - coarse) > 1e-14:
        raise QuadratureError(f"quadrature not converged: residual {abs(fine - coarse):.3e} on {fine:.6e}")
    return float(fine)


def varrho(k: float, ell: float) -> float:
    """rho(k, ell) = (8k / (1 + 16k^2 + 4 ell))^2."""
    if ell < 0:
        raise FisherError("ell must be >= 0")
    return (8.0 * k / (1.0 + 16.0 * k * k + 4.0 * ell)) ** 2


def optimal_k(ell: float) -> float:
    """Positive maximizer sqrt(4 ell + 1) / 4 of rho(., ell)."""
    return float(np.sqrt(4.0 * ell + 1.0) / 4.0)


def optimal_theta(gamma: float, k: float, N: float, branch: int = 1,
                  strict: bool = True) -> float:
    """theta = gamma + branch pi/2 + k/N (mod 2 pi).

    ``k = 0`` puts the measurement exactly on the squeezed axis, where the
    information vanishes; it raises unless ``strict=False``.
    """
    if not N > 0:
        raise FisherError("N must be positive")
    if strict and k == 0:
        raise FisherError("k must be non-zero: at k = 0 the Fisher information degenerates")
    if branch not in (1, -1):
        raise FisherError("branch must be +1 or -1")
    return float(np.mod(gamma + branch * np.pi / 2 + k / N, 2 * np.pi))


def quadrature_offset(theta: float, gamma: float, N: float) -> float:
    """k such that theta = gamma +- pi/2 + k/N, using the nearer branch."""
    d = np.mod(theta - gamma, np.pi) - np.pi / 2
    return float(N * d)


def fisher_asymptotic(k: float, ell: float, dgamma: float, N: float) -> float:
    return 8.0 * varrho(k, ell) * dgamma**2 * N**2


def fisher_report(family: NetworkFamily, V_in, V_out, probe: SqueezedProbe, theta: float,
                  phi: float, step: float = 1e-3, numeric: bool = True) -> FisherReport:
    """Evaluate every Fisher route at ``phi`` for fixed stages and quadrature angle."""
    N = probe.N
    U = family(phi)
    u11, P, gamma = transition(V_out, U, V_in)
    dP, dgamma = phase_derivatives(family, V_in, V_out, phi, step)
    du11 = amplitude_derivative(family, V_in, V_out, phi)
    Delta = homodyne_variance(u11, probe, theta)
    dDelta = homodyne_variance_derivative(u11, du11, probe, theta)
    F_gauss = fisher_gaussian(Delta, dDelta)
    F_expl, fN, hN = fisher_explicit(P, dP, gamma, dgamma, N, theta)
    F_num = fisher_numeric(family, V_in, V_out, probe, theta, phi) if numeric else float("nan")
    ell = ell_of(P, N)
    k = quadrature_offset(theta, gamma, N)
    return FisherReport(
        P=P, gamma=gamma, dP=dP, dgamma=dgamma, Delta=Delta, dDelta=dDelta,
        fN=fN, hN=hN, ell=ell, k=k,
        F_numeric=F_num, F_gaussian=F_gauss, F_explicit=F_expl,
        F_asymptotic=fisher_asymptotic(k, ell, dgamma, N),
    )


def scaling_table(family: NetworkFamily, fixed_stage, phi: float, k: float, Ns,
                  side: Side | str = Side.OUTPUT, branch: int = 1,
                  numeric: bool = True) -> tuple[list[tuple[float, FisherReport]], float]:
    """Fisher routes at each N for a stage refocused exactly at ``phi``.

    Returns ((N, report) rows, log-log slope of F_explicit against N).
    """
    if k == 0:
        raise FisherError("k must be non-zero: at k = 0 the Fisher information degenerates")
    st = build_stages(family, phi, side, fixed_stage)
    _, _, gamma = transition(st.V_out, family(phi), st.V_in)
    rows = []
    for N in Ns:
        probe = SqueezedProbe.from_photons(N)
        theta = optimal_theta(gamma, k, probe.N, branch)
        rows.append((float(N), fisher_report(family, st.V_in, st.V_out, probe, theta, phi,
                                             numeric=numeric)))
    xs = np.log([n for n, _ in rows])
    ys = np.log([r.F_explicit for _, r in rows])
    return rows, float(np.polyfit(xs, ys, 1)[0])
