import json
import shutil
import subprocess

import pytest

from singlab.errors import ConfigError
from singlab.lab_cli import (config_help, derive_verdicts, main, parse_config,
                             xi_grid, eps_grid)

CONST_THM4 = """
[model]
family = constant
lambda0 = 0.5
c = 0.5
p = 0
q = 1

[grid]
xi_kmin = 2
xi_kmax = 6
"""

POWER_THM2 = """
[model]
family = power_blowup
gamma = 0.5
p = 2
q = inf

[grid]
xi_kmin = 2
xi_kmax = 9
eps_per_decade = 4

[numerics]
tol = 1e-9
"""


def write(tmp_path, text, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def run_cli(tmp_path, command, text, out="out", *extra):
    cfg = write(tmp_path, text)
    out_dir = tmp_path / out
    code = main([command, "--config", cfg, "--out", str(out_dir), *extra])
    report = None
    if (out_dir / "report.json").exists():
        report = json.loads((out_dir / "report.json").read_text())
    return code, report, out_dir


def test_classify_constant(tmp_path, capsys):
    code, rep, _ = run_cli(tmp_path, "classify", CONST_THM4)
    assert code == 0
    assert rep["regime"] == "Thm4"
    assert rep["sigma_star"] == "Cinf"
    assert rep["verdicts"] == {"classified": True}
    assert "classified" in capsys.readouterr().out


def test_gronwall_conserved_energy(tmp_path):
    code, rep, out = run_cli(tmp_path, "gronwall", CONST_THM4)
    assert code == 0
    for m in rep["modes"]:
        assert abs(m["margin"] - 1.0) <= m["slack"]
    assert rep["margins"] == [m["margin"] for m in rep["modes"]]
    header = (out / "modes.csv").read_text().splitlines()[0]
    assert header == "xi,eps,E0,Emax,margin"


def test_all_pipeline_files(tmp_path):
    code, rep, out = run_cli(tmp_path, "all", POWER_THM2)
    for key in ("regime", "sigma_star", "i1_slope", "i2_slope", "margins",
                "sigma_eff", "verdicts"):
        assert key in rep
    assert rep["regime"] == "Thm2" and rep["sigma_star"] == 1.5
    assert (out / "scaling.csv").read_text().startswith("eps,I1,I2")
    assert (out / "decay.csv").read_text().startswith("xi,mag0,magT")
    assert json.loads((out / "timing.json").read_text())["total"] > 0
    assert code == (0 if all(rep["verdicts"].values()) else 1)
    assert rep["verdicts"]["gronwall"]
    assert rep["verdicts"]["decay_retention"]


def test_verdicts_round_trip(tmp_path):
    _, rep, _ = run_cli(tmp_path, "all", POWER_THM2)
    assert derive_verdicts(rep) == rep["verdicts"]


def test_verdict_derivation_is_pure():
    rep = {"config": {"checks": {"expect_tight": "i1", "slope_tol": 0.15,
                                 "loglog_tol": 0.2, "sigma_margin": 0.05,
                                 "loss_margin": 1.0},
                      "data": {"sigma": 1.25}},
           "sigma_star": 1.5,
           "scaling": {"i1_abscissa": "log eps", "slope1": -0.8, "theory1": -1.0,
                       "slope2": "nan", "theory2": 0.5, "degenerate1": False,
                       "degenerate2": False, "c1": 1.0},
           "modes": [{"margin": 0.5, "slack": 1e-8, "terminal_ok": True},
                     {"margin": 1.0 + 2e-8, "slack": 1e-8, "terminal_ok": True}],
           "decay": {"kind": "gevrey", "sigma_eff": 1.3}}
    v = derive_verdicts(rep)
    assert v == {"i1_slope_bound": True, "i1_slope_tight": False,
                 "gronwall": False, "terminal_bound": True,
                 "decay_retention": True}


def test_determinism_across_workers(tmp_path):
    text = POWER_THM2
    _, _, a = run_cli(tmp_path, "all", text, "w1", "--workers", "1")
    _, _, b = run_cli(tmp_path, "all", text, "w4", "--workers", "4")
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    for name in ("modes.csv", "scaling.csv", "decay.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_random_phase_is_seeded(tmp_path):
    text = """
[model]
family = oscillatory
m = 0.5
p = 2
phi = random
"""
    _, r1, _ = run_cli(tmp_path, "classify", text, "a", "--seed", "3")
    _, r2, _ = run_cli(tmp_path, "classify", text, "b", "--seed", "3")
    _, r3, _ = run_cli(tmp_path, "classify", text, "c", "--seed", "4")
    assert r1["phi"] == r2["phi"] != r3["phi"]


@pytest.mark.parametrize("text", [
    "[model]\nfamily = constant\nlamda0 = 1\n",
    "[model]\nfamily = constant\n[extras]\nx = 1\n",
    "[model]\nfamily = cubic\n",
    "[model]\nc = 1\n",
    "[model]\nfamily = constant\nq = lots\n",
    "[model]\nfamily = constant\nc = -1\n",
    "[model]\nfamily = constant\n[data]\nkind = polynomial\n",
    "[model]\nfamily = constant\n[grid]\nxi_kmin = 5\nxi_kmax = 3\n",
    "not an ini file",
])
def test_config_errors_exit_2(tmp_path, text):
    code, rep, _ = run_cli(tmp_path, "classify", text)
    assert code == 2
    assert rep is None


def test_missing_config_exit_2(tmp_path):
    assert main(["classify", "--config", str(tmp_path / "nope.cfg")]) == 2


def test_bad_worker_env_exit_2(tmp_path, monkeypatch):
    monkeypatch.setenv("SINGLAB_WORKERS", "many")
    assert main(["classify", "--config", write(tmp_path, CONST_THM4),
                 "--out", str(tmp_path / "o")]) == 2


def test_inadmissible_exit_1(tmp_path):
    text = "[model]\nfamily = power_blowup\ngamma = 1.5\np = 3\n"
    code, rep, _ = run_cli(tmp_path, "classify", text)
    assert code == 1
    assert rep["regime"] == "Inadmissible"
    assert rep["verdicts"] == {"classified": False}


def test_computational_failure_exit_1(tmp_path):
    # three frequencies are too few for a decay fit
    text = CONST_THM4.replace("xi_kmax = 6", "xi_kmax = 4")
    code, rep, _ = run_cli(tmp_path, "propagate", text)
    assert code == 1
    assert rep["failure"]["error"] == "ValueError"


def test_parse_config_defaults():
    cfg = parse_config("[model]\nfamily = constant\nq = inf\ns = inf\nr = 1\n")
    assert cfg["model"]["q"] == float("inf")
    assert cfg["model"]["s"] == float("inf")
    assert cfg["model"]["t0"] is None
    assert cfg["plan"]["regime"] == "auto"
    with pytest.raises(ConfigError):
        parse_config("[model]\nfamily = constant\n[run]\nworkers = 0\n")


def test_grids():
    cfg = parse_config("[model]\nfamily = constant\n[grid]\nxi_kmin = 2\n"
                       "xi_kmax = 4\nxi_per_dyad = 2\n")
    assert xi_grid(cfg).tolist() == pytest.approx(
        [4.0, 4 * 2 ** 0.5, 8.0, 8 * 2 ** 0.5, 16.0])
    eps = eps_grid(cfg)
    assert eps.size == 16
    assert eps[0] == pytest.approx(1e-4) and eps[-1] == pytest.approx(0.1)


def test_help_lists_every_key():
    text = config_help()
    for key in ("family", "xi_kmin", "eps_per_decade", "delta_cut",
                "expect_tight", "workers"):
        assert key in text


@pytest.mark.skipif(shutil.which("singlab") is None,
                    reason="console script not installed")
def test_console_script(tmp_path):
    cfg = write(tmp_path, CONST_THM4)
    res = subprocess.run(["singlab", "classify", "--config", cfg, "--out",
                          str(tmp_path / "o")], capture_output=True, text=True)
    assert res.returncode == 0
    assert "classified" in res.stdout
    res = subprocess.run(["singlab", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "[numerics]" in res.stdout
