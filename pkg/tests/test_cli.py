import json
import math
from pathlib import Path

import numpy as np
import pytest

from kfrsplit.cli import main
from kfrsplit.config import load_config, parse_config_text
from kfrsplit.driver import run_splitting
from kfrsplit.errors import ConfigError
from kfrsplit.grid import Grid, write_measure_csv

from conftest import bump

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def run_cli(argv, capsys):
    status = main(argv)
    return status, capsys.readouterr().out


def write_cfg(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_minimal_config_run(tmp_path, capsys):
    status, _ = run_cli(["run", "--config", str(CONFIGS / "minimal.cfg"), "--out", str(tmp_path), "--quiet"], capsys)
    assert status == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["schema_version"] == 1
    assert summary["energy_monotone"] is True
    chain = summary["energy_series"]
    assert len(chain) == 21 and all(b <= a + 1e-8 for a, b in zip(chain, chain[1:]))
    assert summary["total_square_distance"]["holds"] is True
    assert summary["final_mass"] == pytest.approx(1 / 1.2, rel=0.02)
    for name in ("reports.csv", "edi.csv", "snapshot_t0.05.csv", "snapshot_t0.1.csv"):
        assert (tmp_path / name).is_file()
    header = (tmp_path / "reports.csv").read_text().splitlines()[0]
    assert header == "n,kind,dist_sq,energy_before,energy_after,el_residual,iterations"


def test_cfl_violation_exit(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "scheme.tau = 1.5\nscheme.t_final = 3\ninitial.kind = uniform\n")
    status, out = run_cli(["run", "--config", str(cfg), "--out", str(tmp_path)], capsys)
    assert status == 4
    assert json.loads(out)["error"] == "cfl_violation"


def test_missing_file_is_config_error(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "scheme.tau = 0.1\nscheme.t_final = 1\ninitial.kind = from_csv\ninitial.path = nope.csv\n")
    status, out = run_cli(["run", "--config", str(cfg)], capsys)
    assert status == 2 and json.loads(out)["error"] == "config_error"
    status, out = run_cli(["run", "--config", str(tmp_path / "absent.cfg")], capsys)
    assert status == 2 and json.loads(out)["error"] == "config_error"


@pytest.mark.parametrize(
    "text",
    [
        "scheme.t_final = 1\n",
        "scheme.tau = 0.1\nscheme.t_final = 1\nscheme.bogus = 3\n",
        "scheme.tau = abc\nscheme.t_final = 1\n",
        "scheme.tau = 0.1\nscheme.t_final = 1\nenergy.kernel = mexican_hat\n",
        "scheme.tau = 0.1\nscheme.t_final = 1\ngrid.n_cells = 0\n",
        "scheme.tau = 2\nscheme.t_final = 1\n",
    ],
)
def test_invalid_configs(tmp_path, capsys, text):
    status, out = run_cli(["run", "--config", str(write_cfg(tmp_path, text))], capsys)
    assert status == 2 and json.loads(out)["error"] == "config_error"


def test_dirac_distance(capsys):
    status, out = run_cli(["dirac-distance", "1", "0", "1", "0"], capsys)
    assert status == 0 and json.loads(out)["kfr_sq"] == 0
    status, out = run_cli(["dirac-distance", "1", "0", "1", "3.14159265"], capsys)
    assert json.loads(out)["kfr_sq"] == pytest.approx(8.0, abs=1e-6)


def test_distance_of_file_with_itself(tmp_path, capsys):
    path = tmp_path / "a.csv"
    write_measure_csv(path, bump(Grid(-1, 1, 50), background=0.1))
    status, out = run_cli(["distance", str(path), str(path)], capsys)
    res = json.loads(out)
    assert status == 0
    assert res == {"fr_sq": 0.0, "mk_sq": 0.0, "kfr_upper_bound_sq": 0.0}


def test_distance_with_unequal_masses(tmp_path, capsys):
    g = Grid(-1, 1, 50)
    write_measure_csv(tmp_path / "a.csv", bump(g))
    write_measure_csv(tmp_path / "b.csv", bump(g, height=2.0))
    status, out = run_cli(["distance", str(tmp_path / "a.csv"), str(tmp_path / "b.csv")], capsys)
    res = json.loads(out)
    assert res["mk_sq"] is None and res["fr_sq"] > 0 and res["kfr_upper_bound_sq"] > 0


def test_check_energy(capsys):
    status, out = run_cli(["check-energy", "--internal", "power", "--m", "2"], capsys)
    assert status == 0 and json.loads(out)["satisfies_H"] is True
    status, out = run_cli(["check-energy", "--internal", "boltzmann"], capsys)
    assert status == 0 and json.loads(out)["satisfies_H"] is False
    status, out = run_cli(["check-energy", "--config", str(CONFIGS / "porous_well.cfg")], capsys)
    assert status == 0 and json.loads(out)["rho_max"] == pytest.approx(1.2, rel=1e-3)


def test_usage_error_status(capsys):
    assert main(["frobnicate"]) == 2
    assert main(["run"]) == 2


def test_config_round_trip():
    cfg = load_config(CONFIGS / "porous_well.cfg")
    again = parse_config_text(cfg.dumps())
    assert dict(again.values) == dict(cfg.values)
    grid = cfg.grid()
    params = again.scheme()
    short = type(params)(params.tau, 0.01, params.mk_enabled, params.fr_enabled, params.mk_opts, params.fr_opts)
    a = run_splitting(cfg.initial(grid), cfg.energy_spec(grid), short)
    b = run_splitting(again.initial(again.grid()), again.energy_spec(again.grid()), short)
    for x, y in zip(a.states, b.states):
        assert np.array_equal(x.full.density, y.full.density)


def test_sections_and_dotted_keys_agree():
    dotted = parse_config_text("scheme.tau = 0.1\nscheme.t_final = 1\nenergy.m = 3\n")
    sectioned = parse_config_text("[scheme]\ntau = 0.1\nt_final = 1\n[energy]\nm = 3\n")
    assert dict(dotted.values) == dict(sectioned.values)
    with pytest.raises(ConfigError):
        parse_config_text("scheme.tau = 0.1\n[scheme]\ntau = 0.2\nt_final = 1\n")


def test_from_csv_initial(tmp_path):
    g = Grid(-1, 1, 30)
    write_measure_csv(tmp_path / "rho0.csv", bump(g))
    cfg = parse_config_text(
        "scheme.tau = 0.1\nscheme.t_final = 1\ngrid.n_cells = 30\ninitial.kind = from_csv\ninitial.path = rho0.csv\n",
        tmp_path,
    )
    np.testing.assert_allclose(cfg.initial().density, bump(g).density, rtol=1e-15)
    bad = parse_config_text(
        "scheme.tau = 0.1\nscheme.t_final = 1\ninitial.kind = from_csv\ninitial.path = rho0.csv\n", tmp_path
    )
    with pytest.raises(ConfigError):
        bad.initial()


def test_study_command(tmp_path, capsys):
    cfg = write_cfg(
        tmp_path,
        "scheme.tau = 0.02\nscheme.t_final = 0.06\ngrid.n_cells = 40\ninitial.background = 0.2\n"
        "study.tau_list = 0.02, 0.01\n",
    )
    status, out = run_cli(["study", "--config", str(cfg), "--out", str(tmp_path)], capsys)
    assert status == 0
    rows = json.loads(out)
    assert len(rows) == 2 and rows[0]["observed_order"] is None and math.isfinite(rows[1]["observed_order"])
    assert (tmp_path / "study.csv").is_file()
