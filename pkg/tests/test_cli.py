import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from locsls import serialization as ser
from locsls.cli import _parse_range, load_config, main
from locsls.errors import ConfigurationError
from locsls.netmodel import chain_benchmark


def run(tmp_path, *args):
    return main([*args, "--out", str(tmp_path)])


def read_json(path):
    return json.loads(path.read_text())


def test_synthesize_half_actuation(tmp_path, capsys):
    assert run(tmp_path, "synthesize", "--chain", "20", "--alpha", "0.4", "--rho", "1.25", "--density", "0.5", "--d", "5") == 0
    out = json.loads(capsys.readouterr().out)
    report = read_json(tmp_path / "cost_report.json")
    assert report["cost"]["total"] == pytest.approx(out["total_cost"])
    assert report["tightened_columns"] == list(range(1, 20, 2))
    assert report["communication_violations"] == 0
    ctrl = read_json(tmp_path / "controller.json")
    assert ctrl["schema_version"] == 1 and len(ctrl["subcontrollers"]) == 20
    clm = read_json(tmp_path / "clm.json")
    assert len(clm["columns"]) == 20


def test_no_tighten_reports_columns(tmp_path, capsys):
    code = run(tmp_path, "synthesize", "--density", "0.5", "--no-tighten")
    err = json.loads(capsys.readouterr().out)["error"]
    assert code == 1
    assert err["code"] == "column_synthesis_failed"
    failing = sorted(int(c) for c in err["details"]["columns"])
    assert failing == list(range(1, 20, 2))
    assert (tmp_path / "error.json").exists()


def test_validate_identity_comm_fails(tmp_path, capsys):
    assert run(tmp_path, "validate", "--chain", "10", "--d", "1", "--comm-hops", "0") == 2
    err = json.loads(capsys.readouterr().out)["error"]
    assert err["code"] == "configuration_error"
    assert any(v["check"] == "loc_in_comm" for v in err["details"]["patterns"]["errors"])


def test_validate_ok(tmp_path):
    assert run(tmp_path, "validate", "--chain", "10", "--d", "2") == 0
    assert read_json(tmp_path / "validation_report.json")["patterns"]["ok"]


def test_simulate_writes_trajectory(tmp_path):
    assert run(tmp_path, "simulate", "--chain", "8", "--d", "2", "--steps", "50") == 0
    with open(tmp_path / "trajectory.csv") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 51 and len(rows[0]) == 1 + 3 * 8


def test_simulate_impulse_leak(tmp_path):
    assert run(tmp_path, "simulate", "--chain", "12", "--d", "2", "--disturbance", "impulse", "--impulse-at", "5") == 0
    assert read_json(tmp_path / "simulation_report.json")["localization_leak"] <= 1e-9


def test_compare_fir(tmp_path):
    assert run(tmp_path, "compare-fir", "--density", "0.5", "--fir-horizons", "3,12") == 0
    rep = read_json(tmp_path / "fir_report.json")
    assert [r["feasible"] for r in rep["fir"]] == [False, True]
    assert rep["fir"][1]["fir_cost"] >= rep["inf_cost"]


def test_sweep_horizons_monotone(tmp_path):
    assert run(tmp_path, "sweep", "--density", "0.5", "--fir-horizons", "6:20", "--no-timing") == 0
    with open(tmp_path / "sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    costs = [float(r["fir_cost"]) for r in rows if r["fir_cost"]]
    assert costs and all(b <= a + 1e-9 for a, b in zip(costs, costs[1:]))
    assert not (tmp_path / "sweep_timing.csv").exists()


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"schema_version": 1, "chain": 7, "d": 2, "seed": 3}))
    rc, _ = load_config(["synthesize", "--config", str(cfg), "--d", "1"])
    assert (rc.chain, rc.d, rc.seed) == (7, 1, 3)
    assert rc.comm_hops is None


@pytest.mark.parametrize(
    "payload",
    [{"schema_version": 2}, {"schema_version": 1, "bogus": 1}],
)
def test_bad_config(tmp_path, capsys, payload):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(payload))
    assert run(tmp_path, "synthesize", "--config", str(cfg)) == 2
    assert json.loads(capsys.readouterr().out)["error"]["code"] == "configuration_error"


def test_missing_config_file(tmp_path, capsys):
    assert run(tmp_path, "synthesize", "--config", str(tmp_path / "nope.json")) == 2


def test_plant_file(tmp_path):
    plant, weights = chain_benchmark(6)
    path = tmp_path / "plant.json"
    ser.dump_json({**ser.plant_to_json(plant), **ser.weights_to_json(weights)}, path)
    assert run(tmp_path, "synthesize", "--plant", str(path), "--d", "1") == 0
    clm = read_json(tmp_path / "clm.json")
    np.testing.assert_array_equal(ser.matrix_from_json(clm["plant"]["A"]), plant.A)


def test_unstabilizable_plant_file(tmp_path, capsys):
    # decoupled unstable nodes, half of them without an actuator
    plant, _ = chain_benchmark(4, alpha=0.0, rho=2.0, actuation_density=0.5)
    path = tmp_path / "plant.json"
    ser.dump_json(ser.plant_to_json(plant), path)
    assert run(tmp_path, "synthesize", "--plant", str(path), "--d", "1") == 2
    assert "not stabilizable" in json.loads(capsys.readouterr().out)["error"]["message"]


def test_parse_range():
    assert _parse_range("6:9") == [6, 7, 8, 9]
    assert _parse_range("2:8:3") == [2, 5, 8]
    assert _parse_range("20,50") == [20, 50]
    with pytest.raises(ConfigurationError):
        _parse_range("a:b")


def test_outputs_byte_identical(tmp_path):
    args = ["simulate", "--chain", "10", "--d", "2", "--steps", "40", "--seed", "5"]
    assert main([*args, "--out", str(tmp_path / "a")]) == 0
    assert main([*args, "--out", str(tmp_path / "b"), "--workers", "3"]) == 0
    for name in ("clm.json", "controller.json", "cost_report.json", "trajectory.csv", "simulation_report.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "locsls", "validate", "--chain", "6", "--d", "1", "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["command"] == "validate"


def test_clm_roundtrip(tmp_path):
    assert run(tmp_path, "synthesize", "--chain", "6", "--d", "1") == 0
    cols = ser.clm_columns_from_json(read_json(tmp_path / "clm.json"))
    assert [c.j for c in cols] == list(range(6))
    assert cols[2].support == (1, 2, 3)
