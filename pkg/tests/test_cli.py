import json

import pytest

from distmetro import __version__
from distmetro.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_OK, main


def write_config(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def run(tmp_path, command, params=None, seed="7", out="out", extra=()):
    args = [command, "--out", str(tmp_path / out)]
    if params is not None:
        args += ["--config", write_config(tmp_path, {"params": params}, f"{out}.json")]
    if seed is not None:
        args += ["--seed", seed]
    return main(args + list(extra))


def read_csv_body(path):
    return [line for line in path.read_text().splitlines() if not line.startswith("#")]


def test_fisher_scaling_outputs(tmp_path):
    assert run(tmp_path, "fisher-scaling", {"N_grid": [1e2, 1e3, 1e4, 1e5, 1e6]}) == EXIT_OK
    body = read_csv_body(tmp_path / "out" / "fisher_scaling.csv")
    assert body[0] == "N,F_explicit,F_numeric,F_asymptotic,ratio"
    assert len(body) == 6
    summary = json.loads((tmp_path / "out" / "fisher_scaling.json").read_text())
    assert summary["slope"] == pytest.approx(2.0, abs=0.02)
    assert summary["header"]["version"] == __version__


def test_fisher_scaling_rejects_k_zero(tmp_path, capsys):
    assert run(tmp_path, "fisher-scaling", {"k": 0}) == EXIT_CONFIG
    assert "k must be non-zero" in capsys.readouterr().err


def test_outputs_are_byte_identical(tmp_path):
    params = {"N_grid": [1e2, 1e3, 1e4]}
    assert run(tmp_path, "fisher-scaling", params, out="a") == EXIT_OK
    assert run(tmp_path, "fisher-scaling", params, out="b", extra=["--threads", "2"]) == EXIT_OK
    for name in ("fisher_scaling.csv", "fisher_scaling.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_header_block(tmp_path):
    run(tmp_path, "fisher-scaling", {"N_grid": [1e2, 1e3]})
    head = (tmp_path / "out" / "fisher_scaling.csv").read_text().splitlines()[:5]
    assert head[0] == "# tool: distmetro"
    assert head[1] == f"# version: {__version__}"
    assert head[3].startswith("# config_sha256: ") and len(head[3].split(": ")[1]) == 64


def test_config_hash_tracks_seed(tmp_path):
    run(tmp_path, "fisher-scaling", {"N_grid": [1e2, 1e3]}, seed="1", out="a")
    run(tmp_path, "fisher-scaling", {"N_grid": [1e2, 1e3]}, seed="2", out="b")
    ha = (tmp_path / "a" / "fisher_scaling.csv").read_text().splitlines()[3]
    hb = (tmp_path / "b" / "fisher_scaling.csv").read_text().splitlines()[3]
    assert ha != hb


def test_unknown_keys_rejected(tmp_path):
    assert run(tmp_path, "haar-moments", {"bogus": 1}) == EXIT_CONFIG
    p = write_config(tmp_path, {"params": {}, "extra": 1})
    assert main(["haar-moments", "--config", p, "--seed", "1", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_seed_required_and_validated(tmp_path):
    assert run(tmp_path, "haar-moments", seed=None) == EXIT_CONFIG
    assert run(tmp_path, "haar-moments", seed="-3") == EXIT_CONFIG
    assert run(tmp_path, "haar-moments", seed=str(2**64)) == EXIT_CONFIG


def test_seed_from_config_file(tmp_path):
    p = write_config(tmp_path, {"command": "haar-moments", "seed": 3,
                                "params": {"M": 2, "samples": 20000}})
    assert main(["haar-moments", "--config", p, "--out", str(tmp_path / "o")]) == EXIT_OK
    doc = json.loads((tmp_path / "o" / "haar_moments.json").read_text())
    assert doc["header"]["seed"] == 3


def test_command_mismatch(tmp_path):
    p = write_config(tmp_path, {"command": "estimate", "params": {}})
    assert main(["haar-moments", "--config", p, "--seed", "1"]) == EXIT_CONFIG


def test_bad_arguments(tmp_path):
    assert main(["no-such-command"]) == EXIT_CONFIG
    assert run(tmp_path, "haar-moments", {"M": 2, "samples": 20000}, extra=["--threads", "0"]) == EXIT_CONFIG
    assert run(tmp_path, "haar-moments", {"M": 2, "samples": 20000}, extra=["--control"]) == EXIT_CONFIG


def test_thread_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("DISTMETRO_THREADS", "nope")
    assert run(tmp_path, "haar-moments", {"M": 2, "samples": 20000}) == EXIT_CONFIG
    monkeypatch.setenv("DISTMETRO_THREADS", "2")
    assert run(tmp_path, "haar-moments", {"M": 2, "samples": 20000}) == EXIT_OK


def test_haar_moments_command(tmp_path):
    assert run(tmp_path, "haar-moments", {"M": 3, "samples": 50000}) == EXIT_OK
    doc = json.loads((tmp_path / "out" / "haar_moments.json").read_text())
    assert doc["passed"] and len(doc["rows"]) == 15


def test_haar_moments_failure_exit_code(tmp_path):
    # an impossible threshold forces a suite failure
    assert run(tmp_path, "haar-moments", {"M": 3, "samples": 50000, "z_fail": 1e-9}) == EXIT_CHECK


def test_typicality_command(tmp_path):
    params = {"M_values": [2, 20], "samples": 20000}
    assert run(tmp_path, "typicality-hist", params) == EXIT_OK
    out = tmp_path / "out"
    for M in (2, 20):
        body = read_csv_body(out / f"hist_M{M}.csv")
        assert body[0] == "bin_left,bin_right,density" and len(body) == 51
        assert read_csv_body(out / f"pdf_M{M}.csv")[0] == "x,pdf"
    doc = json.loads((out / "typicality.json").read_text())
    assert doc["checks"]["std_decreasing"]
    assert all("chi2_pvalue" in row for row in doc["per_M"])


def test_adaptive_check_command(tmp_path):
    assert run(tmp_path, "adaptive-check", {"pairs": 20}) == EXIT_OK
    doc = json.loads((tmp_path / "out" / "adaptive_check.json").read_text())
    assert doc["slope"] == pytest.approx(-1.0, abs=0.1)
    assert doc["max_refocus_residual"] <= 1e-12


def test_mesh_family_config(tmp_path):
    fam = {"type": "mesh", "M": 4, "depth": 4, "slots": {"0": 1.0, "2": 0.5}}
    assert run(tmp_path, "adaptive-check", {"family": fam, "pairs": 5}) == EXIT_OK
    assert run(tmp_path, "adaptive-check", {"family": {"type": "torus"}}, out="x") == EXIT_CONFIG


def test_estimate_command_with_controls(tmp_path):
    params = {"N_grid": [1e2, 1e3, 1e4], "trials": 200, "nu": 2000, "c": 0.0}
    code = run(tmp_path, "estimate", params, extra=["--control"])
    doc = json.loads((tmp_path / "out" / "estimate.json").read_text())
    assert set(doc["variants"]) == {"none", "k0", "no-refocus"}
    assert doc["checks"]["slope"]
    assert code == (EXIT_OK if doc["passed"] else EXIT_CHECK)
    assert "shallower" in doc["controls"]["no-refocus"]
    body = read_csv_body(tmp_path / "out" / "estimate.csv")
    assert body[0] == "variant,N,rmse,crb,rmse_over_crb,out_of_window"
    assert len(body) == 10


def test_estimate_rejects_k_zero(tmp_path):
    assert run(tmp_path, "estimate", {"k": 0}) == EXIT_CONFIG


def test_module_entry_point():
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "distmetro", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and __version__ in res.stdout
