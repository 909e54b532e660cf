import json
import pathlib

import pytest

from impulse_games.cli import main, write_csv

CONFIGS = pathlib.Path(__file__).resolve().parents[1] / "configs"
DEFAULTS = CONFIGS / "defaults.toml"
MFG = CONFIGS / "mfg_asym.toml"


def _run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def small_cfg(tmp_path):
    text = DEFAULTS.read_text().replace("dt = 1e-4", "dt = 1e-2").replace("n_paths = 1000", "n_paths = 40")
    p = tmp_path / "small.toml"
    p.write_text(text)
    return p


@pytest.mark.parametrize("mode", ["single", "ne1", "ne2", "mfg"])
def test_solve_writes_outputs(tmp_path, mode):
    assert _run("solve", "--config", DEFAULTS, "--mode", mode, "--out-dir", tmp_path) == 0
    rep = json.loads((tmp_path / f"solve_{mode}.json").read_text())
    assert rep["verified"] is True
    assert rep["d"] < rep["D"] < rep["U"] < rep["u"]
    csv = (tmp_path / f"value_{mode}.csv").read_text().splitlines()
    assert csv[0].startswith("x,")
    assert len(csv) == 1002


def test_solve_ne1_numbers(tmp_path):
    _run("solve", "--config", DEFAULTS, "--mode", "ne1", "--out-dir", tmp_path)
    rep = json.loads((tmp_path / "solve_ne1.json").read_text())
    assert rep["U"] == pytest.approx(0.686, abs=1e-3)
    assert rep["u"] == pytest.approx(5.658, abs=1e-3)


def test_verify_and_negative_control(tmp_path):
    assert _run("verify", "--config", DEFAULTS, "--mode", "ne1", "--out-dir", tmp_path) == 0
    assert _run("verify", "--config", DEFAULTS, "--mode", "ne1", "--perturb-u", 0.5,
                "--out-dir", tmp_path) == 3
    rep = json.loads((tmp_path / "verify_ne1.json").read_text())
    assert rep["verified"] is False


def test_missing_key_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text("\n".join(l for l in DEFAULTS.read_text().splitlines() if not l.startswith("sigma")))
    assert _run("solve", "--config", p, "--out-dir", tmp_path) == 1
    assert "'sigma'" in capsys.readouterr().err


def test_ill_posed_exit_code(tmp_path, capsys):
    p = tmp_path / "ill.toml"
    p.write_text(DEFAULTS.read_text().replace("h = 2.0", "h = 0.9").replace("p = 2.0", "p = 0.9"))
    assert _run("solve", "--config", p, "--mode", "ne1", "--out-dir", tmp_path) == 1
    assert "error" in capsys.readouterr().err


def test_oracle(tmp_path):
    assert _run("oracle", "--config", DEFAULTS, "--n", 401, "--out-dir", tmp_path) == 0
    rep = json.loads((tmp_path / "oracle.json").read_text())
    assert rep["edge_error_steps"] <= 2
    assert (tmp_path / "oracle_grid.csv").exists()


def test_sweep_outputs(tmp_path):
    assert _run("sweep", "--config", DEFAULTS, "--mode", "compare", "--param", "K", "--range", "1,5,4",
                "--out-dir", tmp_path) == 0
    rows = (tmp_path / "sweep_compare_K.csv").read_text().splitlines()
    assert rows[0] == "K,U,u,U_mono,u_mono,status"
    assert len(rows) == 5
    assert (tmp_path / "sweep_compare_K.svg").read_text().startswith("<svg")


def test_sweep_too_many_failures(tmp_path):
    # r >= 1 leaves the h/2 > r k region for most points
    assert _run("sweep", "--config", DEFAULTS, "--mode", "ne1", "--param", "r", "--range", "0.5,3,5",
                "--out-dir", tmp_path) == 2
    assert "IllPosed" in (tmp_path / "sweep_ne1_r.csv").read_text()


def test_sweep_bad_range(tmp_path):
    assert _run("sweep", "--config", DEFAULTS, "--param", "K", "--range", "1,x", "--out-dir", tmp_path) == 1


def test_simulate_deterministic_across_threads(tmp_path, small_cfg):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir(), b.mkdir()
    for d, t in ((a, 1), (b, 3)):
        assert _run("simulate", "--config", small_cfg, "--mode", "ne1", "--seed", 5, "--threads", t,
                    "--out-dir", d) == 0
    assert (a / "simulate_ne1.csv").read_bytes() == (b / "simulate_ne1.csv").read_bytes()


def test_simulate_single_reports_closed_form(tmp_path, small_cfg):
    assert _run("simulate", "--config", small_cfg, "--out-dir", tmp_path) == 0
    rep = json.loads((tmp_path / "simulate_single.json").read_text())
    assert rep["players"][0]["closed_form"] > 0
    assert _run("simulate", "--config", small_cfg, "--mode", "ne1", "--n", 3, "--out-dir", tmp_path) == 1


def test_mfg_command(tmp_path):
    assert _run("mfg", "--config", MFG, "--out-dir", tmp_path) == 0
    rep = json.loads((tmp_path / "mfg.json").read_text())
    assert rep["m_star"] == pytest.approx(rep["closed_form_m_star"], abs=1e-10)
    its = (tmp_path / "mfg_iterates.csv").read_text().splitlines()
    assert its[0] == "iteration,m,gamma"


def test_epsnash_small(tmp_path, small_cfg):
    assert _run("epsnash", "--config", small_cfg, "--n-values", "2,4", "--paths", 20,
                "--out-dir", tmp_path) == 0
    rows = (tmp_path / "epsnash.csv").read_text().splitlines()
    assert rows[0] == "N,gap,se,best_factor,cost" and len(rows) == 3


def test_write_csv_round_trip_precision(tmp_path):
    x = 0.1 + 0.2
    write_csv(tmp_path / "t.csv", ["a", "b"], [{"a": x, "b": True}])
    line = (tmp_path / "t.csv").read_text().splitlines()[1]
    assert float(line.split(",")[0]) == x
    assert line.endswith(",1")
