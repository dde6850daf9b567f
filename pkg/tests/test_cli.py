import csv
import io
import json
from pathlib import Path

import pytest

from passiveqkd.cli import EXIT_CONFIG, EXIT_OK, ConfigError, load_config, main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_bad_number_reports_line(tmp_path, capsys):
    path = write(tmp_path, "[run]\nscenario = bb84-scan\n[postselection]\nmu_max = lots\n")
    assert main(["--config", path]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert f"{path}:4" in err and "mu_max" in err


def test_unknown_scenario_and_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="scenario"):
        load_config(write(tmp_path, "[run]\nscenario = dance\n"))
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(str(tmp_path / "absent.ini"))


def test_invalid_postselection_is_a_config_error(tmp_path):
    path = write(tmp_path, "[run]\nscenario = bb84-scan\n[postselection]\ndelta_z = 0.5\ndelta_xy = 0.5\n")
    assert main(["--config", path]) == EXIT_CONFIG


def test_negative_seed_rejected(tmp_path):
    path = write(tmp_path, "[run]\nscenario = lp-dump\n")
    assert main(["--config", path, "--seed", "-1"]) == EXIT_CONFIG


def test_lp_dump(tmp_path, capsys):
    assert main(["--config", str(CONFIGS / "lpdump.ini")]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("# config_hash ")
    assert "pair XX at 50.0 km" in out


RFI = """[run]
scenario = rfi-scan
[postselection]
mu_max = 0.8
delta_z = 0.15
delta_xy = 0.2
delta_phi = 0.2
t_decoy = 0.4
t_decoy2 = 0.2
[rfi]
distance = 20
angles_deg = 0, 45
"""


def test_rfi_scan_csv_is_deterministic(tmp_path):
    path = write(tmp_path, RFI)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["--config", path, "--out", str(a), "--seed", "4"]) == EXIT_OK
    assert main(["--config", path, "--out", str(b), "--seed", "4"]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    rows = list(csv.DictReader(io.StringIO(a.read_text())))
    assert [float(r["theta_ab_deg"]) for r in rows] == [0.0, 45.0]
    assert len({r["config_hash"] for r in rows}) == 1
    assert all(float(r["rate"]) > 0 for r in rows)


def test_config_hash_depends_on_seed_and_config(tmp_path):
    cfg = load_config(write(tmp_path, RFI))
    other = load_config(write(tmp_path, RFI.replace("distance = 20", "distance = 30"), "b.ini"))
    assert cfg.digest(0) != cfg.digest(1)
    assert cfg.digest(0) != other.digest(0)
    assert len(cfg.digest(0)) == 16


def test_finite_scan_report_is_json(tmp_path):
    text = """[run]
scenario = finite-scan
[channel]
distances = 0
[postselection]
mu_max = 0.6
delta_z = 0.075
delta_xy = 0.2
delta_phi = 0.3
t_decoy = 0.4
t_decoy2 = 0.15
[system]
p_z_bob = 0.8
[finite]
n_values = 1e11
"""
    out = tmp_path / "r.json"
    assert main(["--config", write(tmp_path, text), "--format", "report", "--out", str(out)]) == EXIT_OK
    rep = json.loads(out.read_text())
    rates = {r["n_total"]: r["rate"] for r in rep["rows"]}
    assert set(rates) == {1e11, "inf"}
    assert 0 < rates[1e11] <= rates["inf"]


def test_verify_passes_on_shipped_config(tmp_path):
    out = tmp_path / "v.csv"
    assert main(["--config", str(CONFIGS / "verify.ini"), "--out", str(out)]) == EXIT_OK
    rows = list(csv.DictReader(io.StringIO(out.read_text())))
    assert rows and all(r["passed"] == "True" for r in rows)
