import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest
import yaml

from beamalloc import cli
from beamalloc.config import ConfigError, load_scenario_file, noma_scenario
from beamalloc.model import min_sinr
from beamalloc.scenario import Allocation, Grouping

PAIRS = [{"c_sq": 0.3, "rho_sq": 0.95}, {"c_sq": 0.4, "rho_sq": 0.9},
         {"c_sq": 0.25, "rho_sq": 0.92}, {"c_sq": 0.5, "rho_sq": 0.97}]


def _write(path, doc):
    path.write_text(yaml.safe_dump(doc), encoding="utf-8")
    return path


@pytest.fixture
def noma_file(tmp_path):
    return _write(tmp_path / "noma.yaml", {
        "name": "toy", "dims": {"n_tx": 32, "n_singleton_beams": 4},
        "budgets": {"b_hat_tot": 1.0, "ptot_over_noise_db": 25}, "pairs": PAIRS,
        "sweep": {"variable": "b_hat_tot", "values": [0.5, 2.0]},
        "sim": {"n_trials": 10, "seed": 1, "n_tx_values": [16, 32]},
        "allocation": {"zeta": [1.2, 1.2], "b_bar": [1.5, 1.5], "alpha": 2.0}})


@pytest.fixture
def oma_file(tmp_path):
    rng = np.random.default_rng(0)
    return _write(tmp_path / "oma.yaml", {
        "name": "oma", "dims": {"n_tx": 16},
        "budgets": {"b_hat_tot": 1.0, "ptot_over_noise_db": 20},
        "oma_users": [{"c_sq": float(c)} for c in rng.uniform(0.2, 1.0, 16)],
        "grouping": {"mode": "quantile", "G": 2}})


def _rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_schema_errors_exit_2(tmp_path, capsys):
    bad = _write(tmp_path / "bad.yaml", {"dims": {"n_tx": -1}, "budgets": {"b_hat_tot": 1}})
    assert cli.main(["allocate", "--scenario", str(bad), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "dims.n_tx" in err and "budgets.ptot_over_noise_db" in err
    assert not (tmp_path / "o").exists()

    broken = tmp_path / "broken.yaml"
    broken.write_text("dims: {n_tx: 4\n", encoding="utf-8")
    assert cli.main(["allocate", "--scenario", str(broken)]) == 2
    assert "line" in capsys.readouterr().err

    extra = _write(tmp_path / "extra.yaml", {"dims": {"n_tx": 8, "n_singleton_beams": 2},
                                             "budgets": {"b_hat_tot": 1, "ptot_over_noise_db": 10},
                                             "colour": "red"})
    assert cli.main(["allocate", "--scenario", str(extra)]) == 2


def test_count_mismatch_rejected(tmp_path):
    p = _write(tmp_path / "m.yaml", {"dims": {"n_tx": 8, "n_beams": 5, "n_singleton_beams": 2},
                                     "budgets": {"b_hat_tot": 1, "ptot_over_noise_db": 10},
                                     "pairs": PAIRS[:2]})
    with pytest.raises(ConfigError):
        load_scenario_file(p)


def test_domain_error_exit_2(tmp_path):
    p = _write(tmp_path / "d.yaml", {"dims": {"n_tx": 8, "n_singleton_beams": 7},
                                     "budgets": {"b_hat_tot": 1, "ptot_over_noise_db": 25},
                                     "pairs": [{"c_sq": 0.3, "rho_sq": 0.0}]})
    assert cli.main(["allocate", "--scenario", str(p), "--out", str(tmp_path / "o")]) == 2


@pytest.mark.parametrize("method", ["gp", "progressive"])
def test_allocate_round_trip(noma_file, tmp_path, method):
    out = tmp_path / method
    assert cli.main(["allocate", "--scenario", str(noma_file), "--method", method,
                     "--out", str(out)]) == 0
    doc = json.loads((out / "report.json").read_text())
    res = doc["results"][0]
    alloc = Allocation.from_dict(res["allocation"])
    sc = noma_scenario(load_scenario_file(noma_file))
    grouping = Grouping(tuple(res["grouping"]), max(res["grouping"]) + 1)
    assert min_sinr(sc, grouping, alloc)[0] == pytest.approx(alloc.gamma_th, rel=1e-9)
    rows = _rows(out / "rows.csv")
    assert list(rows[0]) == cli.ROW_COLUMNS
    assert float(rows[0]["gamma_th"]) == alloc.gamma_th
    assert rows[0]["method"] == method
    if method == "progressive":
        assert (out / "trace.csv").exists()


def test_methods_agree_roughly(noma_file, tmp_path):
    vals = {}
    for m in ("gp", "progressive"):
        cli.main(["allocate", "--scenario", str(noma_file), "--method", m, "--out", str(tmp_path / m)])
        vals[m] = float(_rows(tmp_path / m / "rows.csv")[0]["gamma_th_db"])
    assert vals["gp"] >= vals["progressive"] - 1e-6
    assert vals["gp"] - vals["progressive"] < 1.5


def test_allocate_oma_adds_fullload_row(oma_file, tmp_path):
    assert cli.main(["allocate", "--scenario", str(oma_file), "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "rows.csv")
    assert [r["method"] for r in rows] == ["alternating", "fullload"]
    assert float(rows[1]["gamma_th"]) >= float(rows[0]["gamma_th"]) * (1 - 1e-6)
    assert cli.main(["allocate", "--scenario", str(oma_file), "--method", "progressive",
                     "--out", str(tmp_path / "p")]) == 2


def test_sweep_rows_in_order(noma_file, tmp_path, monkeypatch):
    monkeypatch.setenv("BEAMALLOC_THREADS", "1")
    assert cli.main(["sweep", "--scenario", str(noma_file), "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "rows.csv")
    assert [float(r["sweep_value"]) for r in rows] == [0.5, 2.0]
    assert float(rows[1]["gamma_th"]) > float(rows[0]["gamma_th"])


def test_threads_env(monkeypatch):
    monkeypatch.setenv("BEAMALLOC_THREADS", "3")
    assert cli.worker_count() == 3
    monkeypatch.setenv("BEAMALLOC_THREADS", "zero")
    with pytest.raises(ConfigError):
        cli.worker_count()
    monkeypatch.delenv("BEAMALLOC_THREADS")
    assert cli.worker_count() == (os.cpu_count() or 1)


def test_validate_outputs(noma_file, tmp_path, monkeypatch):
    monkeypatch.setenv("BEAMALLOC_THREADS", "1")
    assert cli.main(["validate", "--scenario", str(noma_file), "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "rows.csv")
    assert list(rows[0]) == cli.VALIDATE_COLUMNS
    assert {r["n_tx"] for r in rows} == {"16", "32"}
    assert {r["user_class"] for r in rows} >= {"singleton", "strong", "weak"}
    for r in rows:
        assert float(r["empirical_mean"]) > 0 and int(r["n_failed"]) == 0


def test_compare_outputs(noma_file, tmp_path, monkeypatch):
    monkeypatch.setenv("BEAMALLOC_THREADS", "1")
    assert cli.main(["compare", "--scenario", str(noma_file), "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "rows.csv")
    assert list(rows[0]) == cli.COMPARE_COLUMNS
    assert [float(r["b_hat_tot"]) for r in rows] == [0.5, 2.0]
    for r in rows:
        d = float(r["noma_gamma_th_db"]) - float(r["oma_gamma_th_db"])
        assert float(r["delta_db"]) == pytest.approx(d, abs=1e-9)


def test_console_script(noma_file, tmp_path):
    env = dict(os.environ, BEAMALLOC_THREADS="1")
    proc = subprocess.run([sys.executable, "-m", "beamalloc.cli", "allocate", "--scenario",
                           str(noma_file), "--out", str(tmp_path)],
                          capture_output=True, text=True, env=env)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "report.json").exists()


@pytest.mark.parametrize("name", ["mixed.yaml", "three_group.yaml", "oma.yaml"])
def test_bundled_scenarios_validate(name):
    root = os.path.join(os.path.dirname(__file__), os.pardir, "scenarios")
    load_scenario_file(os.path.join(root, name))
