"""Command-line entry point: named, seeded experiments writing CSV and JSON.

Exit codes: 0 success, 1 runtime failure, 2 configuration error,
3 a built-in check failed.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .adaptive import Side, perturbation_sweep, refocus_residuals
from .estimation import ExperimentConfig, scaling_sweep
from .fisherinfo import scaling_table
from .gaussian import SqueezedProbe
from .montecarlo import THREADS_ENV
from .netcore import (
    MeshElement,
    haar_unitary,
    make_beamsplitter_mesh_family,
    make_phase_distributed_family,
    random_mesh_spec,
)
from .typicality import (
    TwoEigSpec,
    chi_square_gof,
    haar_moment_suite,
    histogram,
    sample_prefactor,
    two_eig_pdf,
)

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG, EXIT_CHECK = 0, 1, 2, 3

DEFAULT_FAMILY = {"type": "phase", "weights": [3, 3, 3, 3, 1, 1, 1, 1]}

DEFAULTS = {
    "fisher-scaling": {
        "family": DEFAULT_FAMILY, "phi": 0.7, "k": 0.25, "branch": 1, "side": "output",
        "N_grid": [1e2, 1e3, 1e4, 1e5, 1e6], "numeric": True,
        "slope_target": 2.0, "slope_tol": 0.02,
    },
    "typicality-hist": {
        "M_values": [2, 20, 200], "g1": 3.0, "g2": 1.0, "samples": 100_000, "bins": 50,
        "overlay_points": 400, "z_max": 4.0, "p_min": 0.01,
    },
    "haar-moments": {"M": 4, "samples": 1_000_000, "z_fail": 5.0},
    "adaptive-check": {
        "family": DEFAULT_FAMILY, "phi": 0.7, "side": "output", "pairs": 100,
        "N_grid": [1e2, 1e3, 1e4, 1e5, 1e6], "c": 1.0, "draws": 16,
        "refocus_tol": 1e-12, "slope_target": -1.0, "slope_tol": 0.1,
    },
    "estimate": {
        "family": DEFAULT_FAMILY, "phi_true": 0.7, "N_grid": [1e2, 1e3, 1e4], "nu": 10_000,
        "trials": 200, "c": 1.0, "k": 0.25, "side": "output", "theta_reference": "pre-estimate",
        "slope_target": -1.0, "slope_tol": 0.1, "efficiency_max": 2.0, "control_slope_max": -0.7,
    },
}

COMMANDS = tuple(DEFAULTS)
TOP_LEVEL_KEYS = {"command", "params", "seed", "output_dir"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    command: str
    params: dict
    seed: int
    output_dir: Path

    def digest(self) -> str:
        doc = {"command": self.command, "params": self.params, "seed": self.seed}
        text = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def header(self) -> dict:
        return {"tool": "distmetro", "version": __version__, "command": self.command,
                "config_sha256": self.digest(), "seed": self.seed}


def _parse_seed(value) -> int:
    try:
        seed = int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"seed must be an integer, got {value!r}") from None
    if isinstance(value, float) or not 0 <= seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    return seed


def load_config(command: str, path: str | None, seed, out: str | None) -> RunConfig:
    doc = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
    unknown = set(doc) - TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if doc.get("command", command) != command:
        raise ConfigError(f"config is for {doc['command']!r}, not {command!r}")
    params = doc.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("params must be an object")
    bad = set(params) - set(DEFAULTS[command])
    if bad:
        raise ConfigError(f"unknown parameters for {command}: {sorted(bad)}")
    merged = {**DEFAULTS[command], **params}
    seed = seed if seed is not None else doc.get("seed")
    if seed is None:
        raise ConfigError("a seed is required (--seed or \"seed\" in the config)")
    out_dir = out if out is not None else doc.get("output_dir", ".")
    return RunConfig(command, merged, _parse_seed(seed), Path(out_dir))


def build_family(spec: dict, rng: np.random.Generator):
    if not isinstance(spec, dict) or "type" not in spec:
        raise ConfigError("family must be an object with a 'type'")
    kind = spec["type"]
    if kind == "phase":
        extra = set(spec) - {"type", "weights"}
        if extra:
            raise ConfigError(f"unknown family keys: {sorted(extra)}")
        w = spec.get("weights")
        if not w:
            raise ConfigError("phase family needs non-empty 'weights'")
        return make_phase_distributed_family(len(w), w)
    if kind == "mesh":
        extra = set(spec) - {"type", "M", "depth", "elements", "slots"}
        if extra:
            raise ConfigError(f"unknown family keys: {sorted(extra)}")
        M = int(spec.get("M", 0))
        if "elements" in spec:
            elements = [MeshElement(tuple(e["modes"]), e.get("transmissivity", 0.5), e.get("phase", 0.0))
                        for e in spec["elements"]]
        else:
            elements = random_mesh_spec(M, int(spec.get("depth", M)), rng)
        slots = {int(i): float(v) for i, v in spec.get("slots", {"0": 1.0}).items()}
        return make_beamsplitter_mesh_family(M, elements, slots)
    raise ConfigError(f"unknown family type {kind!r}")


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, run: RunConfig, columns, rows) -> None:
    buf = io.StringIO()
    for key, val in run.header().items():
        buf.write(f"# {key}: {val}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue(), encoding="utf-8", newline="")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: Path, run: RunConfig, body: dict) -> None:
    doc = {"header": run.header(), "params": run.params, **body}
    path.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _side(value) -> Side:
    try:
        return Side(value)
    except ValueError:
        raise ConfigError(f"side must be 'input' or 'output', got {value!r}") from None


def _n_grid(p) -> list[float]:
    Ns = [float(n) for n in p["N_grid"]]
    if len(Ns) < 2 or any(n <= 0 for n in Ns):
        raise ConfigError("N_grid needs at least two positive photon numbers")
    return Ns


# ---------------------------------------------------------------- commands

def cmd_fisher_scaling(run: RunConfig, threads: int, control: bool) -> int:
    p = run.params
    if float(p["k"]) == 0:
        raise ConfigError("k must be non-zero: the quadrature angle needs an O(1/N) offset "
                          "from the squeezed axis, otherwise the information vanishes")
    rng = np.random.default_rng(run.seed)
    fam = build_family(p["family"], rng)
    fixed = haar_unitary(fam.dim, rng)
    rows, slope = scaling_table(fam, fixed, float(p["phi"]), float(p["k"]), _n_grid(p),
                                _side(p["side"]), int(p["branch"]), bool(p["numeric"]))
    table = [(N, r.F_explicit, r.F_numeric, r.F_asymptotic, r.F_explicit / r.F_asymptotic)
             for N, r in rows]
    write_csv(run.output_dir / "fisher_scaling.csv", run,
              ["N", "F_explicit", "F_numeric", "F_asymptotic", "ratio"], table)
    ok = abs(slope - p["slope_target"]) <= p["slope_tol"]
    write_json(run.output_dir / "fisher_scaling.json", run, {
        "slope": slope, "ratio_at_max_N": table[-1][4],
        "checks": {"slope": ok}, "passed": ok,
        "reports": [{"N": N, **r.to_dict()} for N, r in rows],
    })
    return EXIT_OK if ok else EXIT_CHECK


def cmd_typicality_hist(run: RunConfig, threads: int, control: bool) -> int:
    p = run.params
    g1, g2 = float(p["g1"]), float(p["g2"])
    summary, stds, checks = [], [], {}
    for i, M in enumerate(p["M_values"]):
        M = int(M)
        k = M // 2
        spec = TwoEigSpec(g1, g2, k, M)
        stats = sample_prefactor(spec.spectrum(), int(p["samples"]), seed=run.seed + i, threads=threads)
        edges, dens = histogram(stats.samples, spec, int(p["bins"]))
        write_csv(run.output_dir / f"hist_M{M}.csv", run, ["bin_left", "bin_right", "density"],
                  zip(edges[:-1], edges[1:], dens))
        x = np.linspace(g2**2, g1**2, int(p["overlay_points"]) + 2)[1:-1]
        write_csv(run.output_dir / f"pdf_M{M}.csv", run, ["x", "pdf"], zip(x, two_eig_pdf(x, spec)))
        gof = chi_square_gof(stats.samples, spec, int(p["bins"]))
        z = (stats.mean_mc - stats.mean_analytic) / stats.stderr_mc
        checks[f"M{M}_mean"] = bool(abs(z) <= p["z_max"])
        checks[f"M{M}_chi2"] = bool(gof.pvalue > p["p_min"])
        stds.append(stats.std_mc)
        summary.append({**stats.to_dict(), "z_mean": z, "chi2": gof.statistic, "chi2_dof": gof.dof,
                        "chi2_pvalue": gof.pvalue, "std_mc": stats.std_mc})
    checks["std_decreasing"] = bool(all(a > b for a, b in zip(stds, stds[1:])))
    ok = all(checks.values())
    write_json(run.output_dir / "typicality.json", run, {"per_M": summary, "checks": checks, "passed": ok})
    return EXIT_OK if ok else EXIT_CHECK


def cmd_haar_moments(run: RunConfig, threads: int, control: bool) -> int:
    p = run.params
    suite = haar_moment_suite(int(p["M"]), int(p["samples"]), seed=run.seed,
                              threads=threads, z_fail=float(p["z_fail"]))
    write_csv(run.output_dir / "haar_moments.csv", run, ["moment", "estimate", "exact", "stderr", "z"],
              [(r.name, r.estimate, r.exact, r.stderr, r.z) for r in suite.rows])
    write_json(run.output_dir / "haar_moments.json", run, suite.to_dict())
    return EXIT_OK if suite.passed else EXIT_CHECK


def cmd_adaptive_check(run: RunConfig, threads: int, control: bool) -> int:
    p = run.params
    seeds = np.random.SeedSequence(run.seed).spawn(3)
    rng = np.random.default_rng(seeds[0])
    fam = build_family(p["family"], rng)
    res = refocus_residuals(fam.dim, int(p["pairs"]), np.random.default_rng(seeds[1]))
    fixed = haar_unitary(fam.dim, rng)
    points, slope = perturbation_sweep(fam(float(p["phi"])), fixed, _n_grid(p), _side(p["side"]),
                                       float(p["c"]), int(p["draws"]),
                                       int(seeds[2].generate_state(1)[0]))
    write_csv(run.output_dir / "adaptive_check.csv", run, ["N", "epsilon", "one_minus_P", "ell"],
              [(q.N, q.epsilon, q.one_minus_P, q.ell) for q in points])
    checks = {
        "exact_refocus": bool(res.max() <= p["refocus_tol"]),
        "perturbation_slope": bool(abs(slope - p["slope_target"]) <= p["slope_tol"]),
    }
    ok = all(checks.values())
    write_json(run.output_dir / "adaptive_check.json", run, {
        "max_refocus_residual": float(res.max()), "slope": slope,
        "checks": checks, "passed": ok,
    })
    return EXIT_OK if ok else EXIT_CHECK


def cmd_estimate(run: RunConfig, threads: int, control: bool) -> int:
    p = run.params
    if float(p["k"]) == 0:
        raise ConfigError("k must be non-zero; use --control for the k = 0 negative control")
    rng = np.random.default_rng(run.seed)
    fam = build_family(p["family"], rng)
    Ns = _n_grid(p)
    base = ExperimentConfig(
        family=fam, phi_true=float(p["phi_true"]), probe=SqueezedProbe.from_photons(Ns[0]),
        nu=int(p["nu"]), trials=int(p["trials"]), adapted_side=_side(p["side"]),
        pre_estimate_noise_c=float(p["c"]), k=float(p["k"]), seed=run.seed,
        theta_reference=p["theta_reference"],
    )
    variants = ["none"] + (["k0", "no-refocus"] if control else [])
    out, rows = {}, []
    for name in variants:
        sweep = scaling_sweep(ExperimentConfig(**{**base.__dict__, "control": name}), Ns, threads)
        out[name] = sweep.to_dict()
        for r in sweep.reports:
            rows.append((name, r.N, r.rmse, r.crb, r.rmse / r.crb, r.out_of_window))
    write_csv(run.output_dir / "estimate.csv", run,
              ["variant", "N", "rmse", "crb", "rmse_over_crb", "out_of_window"], rows)
    main = out["none"]
    pts = main["points"]
    checks = {
        "slope": abs(main["slope"] - p["slope_target"]) <= p["slope_tol"],
        "rmse_ge_crb": all(q["rmse"] >= q["crb"] * (1 - 3 / np.sqrt(q["n_used"])) for q in pts),
        "efficiency_at_max_N": pts[-1]["rmse"] <= p["efficiency_max"] * pts[-1]["crb"],
    }
    verdicts = {name: {"slope": out[name]["slope"],
                       "shallower": out[name]["slope"] > p["control_slope_max"]}
                for name in variants[1:]}
    ok = all(checks.values())
    write_json(run.output_dir / "estimate.json", run, {
        "variants": out, "checks": checks, "passed": ok, "controls": verdicts,
    })
    return EXIT_OK if ok else EXIT_CHECK


HANDLERS = {
    "fisher-scaling": cmd_fisher_scaling,
    "typicality-hist": cmd_typicality_hist,
    "haar-moments": cmd_haar_moments,
    "adaptive-check": cmd_adaptive_check,
    "estimate": cmd_estimate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="distmetro", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"distmetro {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--seed", help="unsigned 64-bit seed (overrides the config)")
        sp.add_argument("--out", help="output directory (default: config output_dir or .)")
        sp.add_argument("--threads", type=int, default=None,
                        help=f"worker threads (default: ${THREADS_ENV} or 1)")
        sp.add_argument("--control", action="store_true",
                        help="also run the negative-control variants (estimate only)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        run = load_config(args.command, args.config, args.seed, args.out)
        if args.control and args.command != "estimate":
            raise ConfigError("--control is only defined for the estimate command")
        threads = args.threads
        if threads is None:
            env = os.environ.get(THREADS_ENV)
            try:
                threads = int(env) if env else 1
            except ValueError:
                raise ConfigError(f"{THREADS_ENV} must be an integer") from None
        if threads < 1:
            raise ConfigError("threads must be >= 1")
        run.output_dir.mkdir(parents=True, exist_ok=True)
        return HANDLERS[args.command](run, threads, args.control)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
