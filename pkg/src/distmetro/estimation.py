"""Monte Carlo phase-estimation experiments with homodyne detection on mode 1.

Each trial draws a classical pre-estimate, refocuses one stage against it,
picks the quadrature angle, simulates ``nu`` homodyne outcomes at the true
phase and inverts the Gaussian likelihood. The maximum-likelihood variance
of a zero-mean Gaussian is the mean of squares; the phase is recovered by
root bracketing of phi -> Delta_phi on the monotone branch through the
pre-estimate.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .adaptive import Side, build_stages, pre_estimate
from .fisherinfo import amplitude_derivative, fisher_gaussian, optimal_theta, transition
from .gaussian import SqueezedProbe, homodyne_variance, homodyne_variance_derivative, sample_outcomes
from .montecarlo import default_threads
from .netcore import NetworkFamily, haar_unitary

CONTROLS = ("none", "k0", "no-refocus")
THETA_REFERENCES = ("pre-estimate", "true")


class EstimationError(ValueError):
    pass


def crb(F: float, nu: int) -> float:
    """Cramer-Rao bound 1 / sqrt(nu F)."""
    if nu < 1:
        raise EstimationError("nu must be >= 1")
    if not F > 0:
        raise EstimationError("zero information: the Cramer-Rao bound is unbounded")
    return float(1.0 / np.sqrt(nu * F))


@dataclass(frozen=True)
class ExperimentConfig:
    """One estimation experiment.

    ``control`` selects a negative control: ``"k0"`` measures exactly on the
    squeezed axis, ``"no-refocus"`` leaves both stages Haar-random.
    ``theta_reference="true"`` aims the quadrature at the true phase instead
    of the pre-estimate (an oracle setting, for diagnostics only).
    """

    family: NetworkFamily
    phi_true: float
    probe: SqueezedProbe
    nu: int
    trials: int
    adapted_side: Side = Side.OUTPUT
    pre_estimate_noise_c: float = 1.0
    k: float = 0.25
    seed: int = 0
    control: str = "none"
    theta_reference: str = "pre-estimate"
    grid_points: int = 513
    max_window: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "adapted_side", Side(self.adapted_side))
        if self.nu < 2:
            raise EstimationError("nu must be >= 2")
        if self.trials < 1:
            raise EstimationError("trials must be >= 1")
        if not self.probe.N > 0:
            raise EstimationError("probe must carry photons (N > 0)")
        if self.pre_estimate_noise_c < 0:
            raise EstimationError("pre-estimate noise must be >= 0")
        if self.control not in CONTROLS:
            raise EstimationError(f"control must be one of {CONTROLS}")
        if self.theta_reference not in THETA_REFERENCES:
            raise EstimationError(f"theta_reference must be one of {THETA_REFERENCES}")
        if self.grid_points < 5:
            raise EstimationError("grid_points must be >= 5")
        if not 0 <= self.seed < 2**64:
            raise EstimationError("seed must be a 64-bit unsigned integer")

    @property
    def N(self) -> float:
        return self.probe.N


@dataclass(frozen=True)
class TrialResult:
    index: int
    phi0: float
    theta: float
    phi_hat: float
    delta_hat: float
    fisher_true: float
    fisher_design: float
    window: float
    status: str  # "ok" or "out-of-window"

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass
class EstimationReport:
    estimates: np.ndarray
    rmse: float
    crb: float
    fisher_used: float
    coverage_note: str
    N: float
    phi_true: float
    trials: list[TrialResult] = field(default_factory=list)

    @property
    def out_of_window(self) -> int:
        return sum(not t.ok for t in self.trials)

    @property
    def bias(self) -> float:
        return float(np.mean(self.estimates) - self.phi_true)

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "phi_true": self.phi_true,
            "n_trials": len(self.trials),
            "n_used": int(self.estimates.size),
            "out_of_window": self.out_of_window,
            "rmse": self.rmse,
            "crb": self.crb,
            "rmse_over_crb": self.rmse / self.crb,
            "bias": self.bias,
            "fisher_used": self.fisher_used,
            "coverage_note": self.coverage_note,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def trials_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["trial", "phi0", "theta", "phi_hat", "delta_hat", "fisher_true",
                    "fisher_design", "window", "status"])
        for t in self.trials:
            w.writerow([t.index, repr(t.phi0), repr(t.theta), repr(t.phi_hat), repr(t.delta_hat),
                        repr(t.fisher_true), repr(t.fisher_design), repr(t.window), t.status])
        return buf.getvalue()


def _fisher_at(family, V_in, V_out, probe, theta, phi) -> float:
    u11, _, _ = transition(V_out, family(phi), V_in)
    du = amplitude_derivative(family, V_in, V_out, phi)
    return fisher_gaussian(homodyne_variance(u11, probe, theta),
                           homodyne_variance_derivative(u11, du, probe, theta))


def _monotone_branch(delta, lo: float, hi: float, center: float, points: int):
    """Endpoints of the monotone piece of ``delta`` on [lo, hi] that contains ``center``.

    Turning points are located on a uniform grid and refined by bounded scalar
    minimization; at a turning point exactly, the piece to the right is used.
    Returns None when ``delta`` is flat over the window.
    """
    grid = np.linspace(lo, hi, points)
    vals = np.array([delta(p) for p in grid])
    diffs = np.diff(vals)
    scale = max(np.max(np.abs(vals)), 1e-300)
    sgn = np.where(np.abs(diffs) <= 1e-15 * scale, 0, np.sign(diffs))
    if not np.any(sgn):
        return None
    turns = [lo]
    for j in range(1, len(sgn)):
        if sgn[j] != 0 and sgn[j - 1] != 0 and sgn[j] != sgn[j - 1]:
            flip = 1.0 if sgn[j - 1] < 0 else -1.0  # minimum if it was decreasing
            res = minimize_scalar(lambda p: flip * delta(p), bounds=(grid[j - 1], grid[j + 1]),
                                  method="bounded", options={"xatol": 1e-15})
            turns.append(float(res.x))
    turns.append(hi)
    turns = sorted(set(turns))
    for a, b in zip(turns[:-1], turns[1:]):
        if a <= center < b:
            return a, b
    return turns[-2], turns[-1]


def invert_variance(delta, delta_hat: float, lo: float, hi: float, center: float,
                    points: int = 513):
    """Phase on the monotone branch through ``center`` with delta(phi) = delta_hat, or None.

    None means ``delta_hat`` is outside the range of delta over that branch.
    """
    branch = _monotone_branch(delta, lo, hi, center, points)
    if branch is None:
        return None
    a, b = branch
    da, db = delta(a) - delta_hat, delta(b) - delta_hat
    if da == 0:
        return a
    if db == 0:
        return b
    if np.sign(da) == np.sign(db):
        return None
    return float(brentq(lambda p: delta(p) - delta_hat, a, b, xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=500))


def run_trial(config: ExperimentConfig, index: int, fixed_stage, rng: np.random.Generator) -> TrialResult:
    """One pass of pre-estimate, refocus, quadrature choice, sampling and inversion."""
    fam, probe, N = config.family, config.probe, config.N
    c = config.pre_estimate_noise_c
    phi0 = pre_estimate(config.phi_true, N, c, rng)

    if config.control == "no-refocus":
        V_other = haar_unitary(fam.dim, rng)
        if config.adapted_side is Side.OUTPUT:
            V_in, V_out = fixed_stage, V_other
        else:
            V_in, V_out = V_other, fixed_stage
    else:
        st = build_stages(fam, phi0, config.adapted_side, fixed_stage)
        V_in, V_out = st.V_in, st.V_out

    phi_ref = config.phi_true if config.theta_reference == "true" else phi0
    _, _, gamma_ref = transition(V_out, fam(phi_ref), V_in)
    k = 0.0 if config.control == "k0" else config.k
    theta = optimal_theta(gamma_ref, k, N, strict=False)

    def delta(p):
        u11, _, _ = transition(V_out, fam(p), V_in)
        return homodyne_variance(u11, probe, theta)

    x = sample_outcomes(delta(config.phi_true), config.nu, rng)
    delta_hat = float(np.mean(x * x))

    F_true = _fisher_at(fam, V_in, V_out, probe, theta, config.phi_true)
    F_design = _fisher_at(fam, V_in, V_out, probe, theta, phi0)
    w = 5.0 * c / np.sqrt(N)
    if F_design > 0:
        w = max(w, 10.0 * crb(F_design, config.nu))
    w = min(w, config.max_window) if w > 0 else config.max_window

    # the branch is taken through the phase the quadrature angle was designed for
    phi_hat = invert_variance(delta, delta_hat, phi0 - w, phi0 + w, phi_ref, config.grid_points)
    status = "ok" if phi_hat is not None else "out-of-window"
    return TrialResult(index, phi0, theta, float("nan") if phi_hat is None else phi_hat,
                       delta_hat, F_true, F_design, w, status)


def run_experiment(config: ExperimentConfig, threads: int | None = None) -> EstimationReport:
    """All trials of ``config``; deterministic in the seed whatever the thread count.

    The non-adapted stage is drawn once per experiment; each trial has its own
    seeded sub-stream, and results are merged in trial order.
    """
    stage_seq, *trial_seqs = np.random.SeedSequence(config.seed).spawn(config.trials + 1)
    fixed_stage = haar_unitary(config.family.dim, np.random.default_rng(stage_seq))

    def one(i):
        return run_trial(config, i, fixed_stage, np.random.default_rng(trial_seqs[i]))

    threads = default_threads() if threads is None else max(1, threads)
    if threads == 1:
        results = [one(i) for i in range(config.trials)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(config.trials)))

    good = [t for t in results if t.ok]
    if not good:
        raise EstimationError("likelihood inversion failed for every trial (no phase information)")
    est = np.array([t.phi_hat for t in good])
    rmse = float(np.sqrt(np.mean((est - config.phi_true) ** 2)))
    inv_f = [1.0 / t.fisher_true if t.fisher_true > 0 else np.inf for t in results]
    mean_inv = float(np.mean(inv_f))
    bound = float(np.sqrt(mean_inv / config.nu))
    if not np.isfinite(bound):
        raise EstimationError("zero information at the true phase in some trial")
    note = (f"{len(good)}/{len(results)} trials inverted; "
            f"{len(results) - len(good)} out-of-window excluded")
    return EstimationReport(
        estimates=est, rmse=rmse, crb=bound, fisher_used=1.0 / mean_inv,
        coverage_note=note, N=config.N, phi_true=config.phi_true, trials=results,
    )


@dataclass
class SweepResult:
    Ns: list[float]
    reports: list[EstimationReport]
    slope: float

    def to_dict(self) -> dict:
        return {"slope": self.slope, "points": [r.to_dict() for r in self.reports]}


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def scaling_sweep(config: ExperimentConfig, Ns, threads: int | None = None,
                  min_trials: int = 200) -> SweepResult:
    """RMSE at each photon number in ``Ns`` and the least-squares log-log slope.

    The same seed is reused at every N (common random numbers).
    """
    Ns = [float(n) for n in Ns]
    if len(Ns) < 3:
        raise EstimationError("a scaling sweep needs at least three photon numbers")
    if config.trials < min_trials:
        raise EstimationError(f"a scaling sweep needs at least {min_trials} trials per point")
    reports = [run_experiment(replace(config, probe=SqueezedProbe.from_photons(n)), threads)
               for n in Ns]
    return SweepResult(Ns, reports, loglog_slope(Ns, [r.rmse for r in reports]))
