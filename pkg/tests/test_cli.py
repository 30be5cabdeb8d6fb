import subprocess
import sys

import pytest

from mstar import threshold, validation
from mstar.cli import main

DOCS = __file__.rsplit("/tests/", 1)[0] + "/docs"


@pytest.fixture
def simulated(tmp_path):
    prefix = str(tmp_path / "sim")
    assert main(["simulate", "--n", "9", "--m", "4", "--rho", "0.9", "--tau2", "0.5",
                 "--sigma2", "0.5", "--structure", "C2", "--seed", "3", "--out", prefix]) == 0
    return prefix


def test_help_lists_subcommands():
    out = subprocess.run([sys.executable, "-m", "mstar", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("threshold", "fit", "simulate", "validate", "grid"):
        assert cmd in out.stdout


def test_simulate_outputs(simulated, capsys):
    adj = open(simulated + ".adj").read().splitlines()
    assert adj[0] == "n 9" and len(adj) == 9
    csv = open(simulated + ".csv").read().splitlines()
    assert csv[0] == "area,y,x" and len(csv) == 37


def test_simulate_grid_needs_square(tmp_path, capsys):
    args = ["simulate", "--n", "10", "--m", "2", "--rho", "0.5", "--tau2", "1", "--sigma2", "1",
            "--graph", "grid", "--out", str(tmp_path / "g")]
    assert main(args) == 2
    assert "perfect square" in capsys.readouterr().err
    args[2] = "9"
    assert main(args) == 0


def test_threshold_from_data(simulated, capsys):
    code = main(["threshold", "--adjacency", simulated + ".adj", "--data", simulated + ".csv",
                 "--rho", "0.95", "--tau2", "0.5", "--sigma2", "0.5"])
    out = capsys.readouterr().out
    assert code == 0
    assert out.splitlines()[0].startswith("m* = ")
    assert "d_dot = " in out and "numerator_sum = " in out
    assert out.count("\n  ") == 5


def test_threshold_from_xbar_and_min_m(simulated, tmp_path, capsys):
    xbar = tmp_path / "xbar.txt"
    xbar.write_text("\n".join(["1.0"] * 9))
    code = main(["threshold", "--adjacency", simulated + ".adj", "--xbar", str(xbar),
                 "--rho", "0.5", "--tau2", "0.5", "--sigma2", "0.5", "--min-m", "5"])
    out = capsys.readouterr().out
    assert code == 0
    assert "m* = INFINITE: spatial model required" in out
    assert "verdict: spatial model required regardless of replication" in out


def test_threshold_rejects_bad_input(simulated, tmp_path, capsys):
    xbar = tmp_path / "xbar.txt"
    xbar.write_text("\n".join(["2.0"] * 9))
    base = ["threshold", "--adjacency", simulated + ".adj", "--rho", "0.5", "--tau2", "0.5", "--sigma2", "0.5"]
    assert main(base + ["--xbar", str(xbar)]) == 2
    assert "exceeds n" in capsys.readouterr().err
    xbar.write_text("1 2 3")
    assert main(base + ["--xbar", str(xbar)]) == 2
    assert main(base + ["--data", simulated + ".csv", "--gamma", "0"]) == 2
    disconnected = tmp_path / "bad.adj"
    disconnected.write_text("n 3\n1 2\n")
    assert main(["threshold", "--adjacency", str(disconnected), "--xbar", str(xbar),
                 "--rho", "0.5", "--tau2", "0.5", "--sigma2", "0.5"]) == 2
    assert "not connected" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        main(["threshold", "--adjacency", simulated + ".adj"])
    assert exc.value.code == 2


def test_fit_both_models(simulated, tmp_path, capsys):
    chain = tmp_path / "chain.csv"
    code = main(["fit", "--adjacency", simulated + ".adj", "--data", simulated + ".csv",
                 "--iters", "2000", "--burnin", "500", "--thin", "5", "--dump-chain", str(chain)])
    captured = capsys.readouterr()
    assert code == 0
    assert "retained draws: 300" in captured.out
    assert "rho acceptance rate:" in captured.out
    assert "standardized" in captured.err or "scaled" in captured.err
    assert open(chain).readline().strip() == "iter,beta0,beta1,sigma2,tau2,rho"
    code = main(["fit", "--data", simulated + ".csv", "--model", "nonspatial", "--iters", "1000",
                 "--burnin", "100"])
    out = capsys.readouterr().out
    assert code == 0 and "rho" not in out


def test_fit_errors(simulated, tmp_path, capsys):
    assert main(["fit", "--data", simulated + ".csv"]) == 2
    assert main(["fit", "--adjacency", simulated + ".adj", "--data", simulated + ".csv",
                 "--iters", "100", "--burnin", "200"]) == 2
    assert main(["fit", "--adjacency", simulated + ".adj", "--data", str(tmp_path / "missing.csv")]) == 2


def test_fit_divergence_exit_code(simulated, monkeypatch, capsys):
    from mstar import kernels

    def diverge(*args):
        return args[25] + 1  # t0 + 1

    monkeypatch.setattr(kernels, "run_block", diverge)
    monkeypatch.setattr(kernels, "BACKENDS", {"python": diverge, "cython": diverge})
    code = main(["fit", "--adjacency", simulated + ".adj", "--data", simulated + ".csv",
                 "--iters", "100", "--burnin", "10"])
    assert code == 3
    assert "iteration 1" in capsys.readouterr().err


def test_validate_passes(capsys):
    assert main(["validate", "--seed", "0", "--cases", "50"]) == 0
    out = capsys.readouterr().out
    assert "cases: 50" in out and "all cases within" in out


def test_validate_catches_corrupted_formula(monkeypatch, capsys):
    real = threshold.precision_spatial

    def off_by_a_bit(spec, cov, n, m, d):
        return real(spec, cov, n, m, d) * (1 + 1e-6)

    monkeypatch.setattr(threshold, "precision_spatial", off_by_a_bit)
    assert main(["validate", "--cases", "5"]) == 4
    out = capsys.readouterr().out
    assert out.count("FAIL seed=0") >= 1


def test_validation_suite_tolerance():
    cases = validation.run_oracle_suite(0, 200)
    assert len(cases) == 200
    assert max(c.max_rel_err for c in cases) <= validation.TOLERANCE
    assert {c.rho for c in cases} == set(validation.RHO_SET)


def test_grid_dry_run(capsys):
    assert main(["grid", "--config", f"{DOCS}/full_grid.cfg", "--dry-run"]) == 0
    assert "cells:                    729" in capsys.readouterr().out


def test_grid_run(tmp_path, capsys):
    cfg = tmp_path / "g.cfg"
    cfg.write_text("n_values = 5\nrho_values = 0.9\nkappa_values = 1\nm_values = 2, 4\n"
                   "structures = C1\nreplicates = 2\niterations = 300\nburn_in = 100\nthin = 2\n")
    assert main(["grid", "--config", str(cfg), "--out", str(tmp_path / "out")]) == 0
    out = capsys.readouterr().out.split()
    assert out[0].endswith("variance_differences.csv") and out[1].endswith("mean_differences.csv")
    assert len(open(out[0]).read().splitlines()) == 3
    assert main(["grid", "--config", str(cfg)]) == 2
    cfg.write_text("n_values = 5\n")
    assert main(["grid", "--config", str(cfg), "--dry-run"]) == 2
