import csv
import json
import shutil
import subprocess

import numpy as np
import pytest

from calerm.cli import main
from calerm.experiments import config_from_dict


def write_config(path, **kw):
    d = {"design": {"kind": "gaussian_isotropic", "dim": 6}, "t0": {"kind": "dense", "l2": 1.0},
         "noise": {"kind": "none"}, "set": {"kind": "full_space", "dim": 6}, "loss": {"kind": "squared"},
         "N": 30, "trials": 3, "master_seed": 1, "holdout": 2000}
    d.update(kw)
    path.write_text(json.dumps(d), encoding="utf-8")
    return str(path)


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_fit_minimal(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json")
    out = tmp_path / "out"
    assert main(["fit", "--config", cfg, "--out", str(out)]) == 0
    row = read_csv(out / "fit.csv")[0]
    assert float(row["est_error_l2"]) <= 1e-6
    t_hat = np.array([float(row[f"t_hat_{j}"]) for j in range(1, 7)])
    assert np.allclose(t_hat, np.full(6, 1 / np.sqrt(6)), atol=1e-6)
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 1 and lines[0].startswith("fit ")


def test_fit_bad_config(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", loss={"kind": "huber", "gamma": -1})
    assert main(["fit", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    captured = capsys.readouterr()
    assert "loss.gamma" in captured.err and captured.out == ""


def test_fit_plugin_gamma(tmp_path):
    cfg = write_config(tmp_path / "c.json", loss={"huber_auto": {"mode": "plugin"}},
                       noise={"kind": "gaussian", "scale": 0.5})
    assert main(["fit", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    row = read_csv(tmp_path / "o" / "fit.csv")[0]
    assert float(row["gamma"]) > 0


def test_numeric_error_exit_code(tmp_path):
    cfg = write_config(tmp_path / "c.json", t0=[1e200] * 6, set={"kind": "l2_ball", "dim": 6, "r": 1e201})
    with np.errstate(all="ignore"):
        assert main(["fit", "--config", cfg, "--out", str(tmp_path / "o")]) == 3


def test_complexity(tmp_path):
    cfg = write_config(tmp_path / "c.json", N=24, complexity={"mc_budget": 200, "zeta1": 1.0})
    for name in ("a", "b"):
        assert main(["complexity", "--config", cfg, "--out", str(tmp_path / name)]) == 0
    rows = {r["quantity"]: r for r in read_csv(tmp_path / "a" / "complexity.csv")}
    assert float(rows["r1Q"]["value"]) == 0.0
    assert float(rows["r0"]["value"]) == 0.0
    assert (tmp_path / "a" / "complexity.csv").read_bytes() == (tmp_path / "b" / "complexity.csv").read_bytes()


def test_smallball(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", smallball={"distribution": "gaussian", "kappa_grid": [0.0, 0.5, 1.0]})
    assert main(["smallball", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    rows = read_csv(tmp_path / "o" / "smallball.csv")
    assert [float(r["kappa"]) for r in rows] == [0.0, 0.5, 1.0]
    assert float(rows[1]["probability"]) == pytest.approx(0.617, abs=0.02)
    assert "certificate=holds" in capsys.readouterr().out


def test_experiment_sweep_override_plot(tmp_path):
    cfg = write_config(tmp_path / "c.json", sweep={"parameter": "sigma", "values": [0.0, 0.5, 1.0]}, trials=4)
    out = tmp_path / "o"
    assert main(["experiment", "--config", cfg, "--out", str(out), "--threads", "1"]) == 0
    assert len(read_csv(out / "results.csv")) == 12
    assert not (out / "summary.svg").exists()
    out2 = tmp_path / "o2"
    assert main(["experiment", "--config", cfg, "--out", str(out2), "--override", "trials=2", "--plot",
                 "--threads", "1"]) == 0
    assert len(read_csv(out2 / "results.csv")) == 6
    assert (out2 / "summary.svg").read_text(encoding="utf-8").lstrip().startswith("<?xml")


def test_config_echo_round_trip(tmp_path):
    cfg = write_config(tmp_path / "c.json", loss={"huber_auto": {"c0": 1.5}})
    out = tmp_path / "o"
    assert main(["experiment", "--config", cfg, "--out", str(out), "--override", "trials=1", "--seed", "42",
                 "--threads", "1"]) == 0
    echo = json.loads((out / "config.json").read_text(encoding="utf-8"))
    parsed = config_from_dict(echo)
    assert parsed.master_seed == 42 and parsed.trials == 1
    again = tmp_path / "o2"
    assert main(["experiment", "--config", str(out / "config.json"), "--out", str(again), "--threads", "1"]) == 0
    assert (out / "config.json").read_bytes() == (again / "config.json").read_bytes()
    assert (out / "results.csv").read_bytes() == (again / "results.csv").read_bytes()


def test_seed_from_environment(tmp_path, monkeypatch):
    cfg = write_config(tmp_path / "c.json", trials=1)
    monkeypatch.setenv("CALERM_SEED", "77")
    assert main(["experiment", "--config", cfg, "--out", str(tmp_path / "o"), "--threads", "1"]) == 0
    assert json.loads((tmp_path / "o" / "config.json").read_text())["master_seed"] == 77
    monkeypatch.setenv("CALERM_SEED", "x")
    assert main(["experiment", "--config", cfg, "--out", str(tmp_path / "p"), "--threads", "1"]) == 2


def test_missing_config_file(tmp_path):
    assert main(["fit", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path / "o")]) == 2


def test_lf_line_endings(tmp_path):
    cfg = write_config(tmp_path / "c.json")
    main(["experiment", "--config", cfg, "--out", str(tmp_path / "o"), "--threads", "1"])
    assert b"\r\n" not in (tmp_path / "o" / "results.csv").read_bytes()


@pytest.mark.skipif(shutil.which("calerm") is None, reason="console script not installed")
def test_console_script(tmp_path):
    cfg = write_config(tmp_path / "c.json")
    proc = subprocess.run(["calerm", "fit", "--config", cfg, "--out", str(tmp_path / "o")], capture_output=True,
                          text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("fit ")
