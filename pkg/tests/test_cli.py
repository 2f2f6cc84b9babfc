import csv
import json
import math
import subprocess
import sys
from fractions import Fraction

import pytest

from parrondo_ctrw import cli

FAST = ["--paths", "3000", "--grid-points", "11"]


def run(tmp_path, *args):
    out = tmp_path / "out"
    code = cli.main([*args, "--out", str(out)])
    return code, out


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], [[float(v) for v in r] for r in rows[1:]]


# --- helpers ------------------------------------------------------------------------

def test_fig2_polynomial_exact():
    assert cli.fig2_polynomial() == (Fraction(36), Fraction(-845), Fraction(-300))


def test_positive_root():
    c = cli.fig2_polynomial()
    root = cli.positive_root(c)
    assert float(c[0]) + float(c[1]) * root + float(c[2]) * root**2 == pytest.approx(0.0, abs=1e-12)
    # reference value from the quadratic formula in high precision
    assert root == pytest.approx((-845 + math.sqrt(845**2 + 4 * 300 * 36)) / 600, rel=1e-12)
    assert cli.positive_root(cli.QUOTED_AB_POLYNOMIAL) == pytest.approx(0.042481, abs=1e-6)


def test_experiment_config_validation():
    with pytest.raises(ValueError):
        cli.ExperimentConfig(experiment="fig9")
    with pytest.raises(ValueError):
        cli.ExperimentConfig(r_values=[])
    with pytest.raises(ValueError):
        cli.ExperimentConfig(r_values=[0.5, 1.5])
    with pytest.raises(ValueError):
        cli.ExperimentConfig(epsilon=-0.1)
    with pytest.raises(ValueError):
        cli.ExperimentConfig(format="xml")


def test_spec_from_dict():
    block = {"lam": 5, "r": 0.25, "a": {"q": 0.5, "gamma": 1, "eta": 1},
             "pos": {"q": 0.7, "gamma": 2, "eta": 1}, "neg": {"q": 0.4, "gamma": 1, "eta": 3}}
    m = cli.spec_from_dict(block)
    assert m.r == 0.25 and m.lam == 5.0 and m.b.law_neg.eta == 3.0
    unb = cli.spec_from_dict({"lam": 5, "r": 0.3, "unbias": True, "a": {"gamma": 2, "eta": 1},
                              "pos": {"q": 0.6, "gamma": 3, "eta": 1}, "neg": {"gamma": 1, "eta": 2}})
    assert cli.analytic_summary(unb)["drift_rate_a"] == pytest.approx(0, abs=1e-12)
    assert cli.analytic_summary(unb)["drift_rate_b"] == pytest.approx(0, abs=1e-12)
    with pytest.raises(ValueError):
        cli.spec_from_dict({"lam": 1, "a": {"q": 0.5, "gamma": 1, "eta": 1}})


def test_analytic_summary_fig1():
    d = cli.analytic_summary(cli.model.fig1_spec())
    assert d["alpha"] == 0.65 and d["beta"] == 0.8
    assert d["drift_rate_ab"] == 1.125 and d["superposition_rate"] == 0.0
    assert d["optimal_r"] == 0.5 and d["other_critical_r"] is None
    assert d["drift_derivative_rate"] == 0.0


# --- subcommands ------------------------------------------------------------------

def test_fig1_outputs(tmp_path):
    code, out = run(tmp_path, "fig1", *FAST)
    assert code == 0
    s = json.loads((out / "summary.json").read_text())
    assert s["self_check_passed"] and len(s["checks"]) == 3
    assert s["analytic_mu_ab_at_1"] == 1.125
    assert s["analytic_mu_a_at_1"] == 0.0 and s["analytic_mu_b_at_1"] == 0.0
    for c in s["checks"]:
        assert {"label", "analytic", "mc_mean", "mc_stderr", "z", "pass"} <= set(c)
    header, rows = read_csv(out / "path_AB.csv")
    assert header == ["t", "X"] and rows[0] == [0.0, 0.0] and rows[-1][0] == 1.0
    header, rows = read_csv(out / "drift.csv")
    assert header[0] == "t" and len(rows) == 11
    assert sorted(p.name for p in out.iterdir()) == s["files"]


def test_fig2_summary(tmp_path):
    code, out = run(tmp_path, "fig2", *FAST)
    assert code == 0
    s = json.loads((out / "summary.json").read_text())
    assert s["polynomial_ab_coefficients_x640"] == ["36", "-845", "-300"]
    assert s["analytic_mu_ab_at_1"] == pytest.approx(0.593125, abs=1e-15)
    assert s["polynomial_mu_ab_at_1"] == pytest.approx(0.593125, abs=1e-12)
    assert s["polynomial_mu_ab_quoted_at_1"] == pytest.approx(0.600125, abs=1e-12)
    assert s["analytic_mu_a_at_1"] == -0.8 and s["analytic_mu_b_at_1"] == -0.2075
    assert s["epsilon_star"] == pytest.approx(0.041978, abs=1e-6)


def test_fig2_rejects_large_epsilon(tmp_path):
    code, _ = run(tmp_path, "fig2", *FAST, "--epsilon", "0.6")
    assert code == 1


def test_fig3_outputs(tmp_path):
    code, out = run(tmp_path, "fig3", *FAST, "--r", "0.02,0.2,1")
    assert code == 0
    s = json.loads((out / "summary.json").read_text())
    assert s["r_star_exact"] == "83/1638"
    header, rows = read_csv(out / "fig3.csv")
    assert header == ["r", "analytic", "mc", "stderr"]
    assert [r[0] for r in rows] == [0.02, 0.2, 1.0]
    assert rows[1][1] == pytest.approx(0.4892, abs=1e-12)


def test_sweep_with_config_file(tmp_path):
    cfg = tmp_path / "exp.yaml"
    cfg.write_text(
        "sim:\n  n_paths: 2000\n  grid_points: 3\n  master_seed: 9\n"
        "process:\n  lam: 10\n  unbias: true\n"
        "  a: {gamma: 1, eta: 1}\n  pos: {q: 0.6, gamma: 4, eta: 1}\n  neg: {gamma: 1, eta: 1}\n"
        "r_values: [0.0, 0.25, 0.5, 0.75, 1.0]\n"
    )
    code, out = run(tmp_path, "sweep", "--config", str(cfg), "--format", "json")
    assert code == 0
    s = json.loads((out / "summary.json").read_text())
    assert s["components_unbiased"] and s["seed"] == 9 and s["n_paths"] == 2000
    assert abs(s["argmax_r_fine_grid"] - s["optimal_r"]) <= 1e-3
    table = json.loads((out / "sweep_r.json").read_text())
    assert list(table) == ["r", "analytic", "mc", "stderr"]
    assert "sweep_epsilon.json" not in s["files"]


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "exp.yaml"
    cfg.write_text("sim:\n  n_paths: 50\n  master_seed: 1\n")
    args = cli.build_parser().parse_args(["simulate", "--config", str(cfg), "--seed", "7", "--process", "B"])
    c = cli.load_config(args)
    assert c.sim.master_seed == 7 and c.sim.n_paths == 50 and c.process_kind == "B"


def test_simulate_and_analytic(tmp_path, capsys):
    code, out = run(tmp_path, "simulate", *FAST, "--process", "A")
    assert code == 0
    header, _ = read_csv(out / "ensemble.csv")
    assert header == ["t", "mean", "variance", "stderr", "analytic"]
    capsys.readouterr()
    assert cli.main(["analytic", "--r", "0.02,0.2"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert [d["r"] for d in data] == [0.02, 0.2]


def test_outputs_are_byte_identical(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    assert cli.main(["fig2", *FAST, "--out", str(a)]) == 0
    assert cli.main(["fig2", *FAST, "--workers", "2", "--paths", "20000", "--out", str(b)]) == 0
    c = tmp_path / "c"
    assert cli.main(["fig2", *FAST, "--paths", "20000", "--out", str(c)]) == 0
    for name in json.loads((b / "summary.json").read_text())["files"]:
        assert (b / name).read_bytes() == (c / name).read_bytes(), name
    a2 = tmp_path / "a2"
    assert cli.main(["fig2", *FAST, "--out", str(a2)]) == 0
    for p in a.iterdir():
        assert p.read_bytes() == (a2 / p.name).read_bytes()


# --- exit codes ---------------------------------------------------------------------

def test_exit_code_validation(tmp_path):
    assert run(tmp_path, "fig3", "--r", "")[0] == 1
    assert run(tmp_path, "fig1", "--paths", "0")[0] == 1
    bad = tmp_path / "bad.yaml"
    bad.write_text("nonsense_key: 3\n")
    assert run(tmp_path, "fig1", "--config", str(bad))[0] == 1
    bad.write_text("sim: [unclosed\n")
    assert run(tmp_path, "fig1", "--config", str(bad))[0] == 1


def test_exit_code_io(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert cli.main(["fig1", *FAST, "--out", str(blocker / "sub")]) == 3
    assert cli.main(["fig1", "--config", str(tmp_path / "missing.yaml")]) == 3


def test_exit_code_self_check(tmp_path, monkeypatch):
    monkeypatch.setattr(cli, "SELF_CHECK_SIGMAS", 1e-9)
    code, out = run(tmp_path, "fig1", *FAST)
    assert code == 2
    assert not json.loads((out / "summary.json").read_text())["self_check_passed"]


def test_usage_errors_are_validation_errors():
    assert cli.main(["fig9"]) == 1
    assert cli.main(["fig1", "--paths", "many"]) == 1
    assert cli.main(["--help"]) == 0


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "parrondo_ctrw", "analytic"], capture_output=True, text=True, check=True
    )
    assert json.loads(proc.stdout)["drift_rate_ab"] == 1.125
