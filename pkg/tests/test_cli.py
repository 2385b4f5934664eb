import csv
import json
import subprocess
import sys

import pytest

from macopt.cli import main, parse_r_range
from macopt.config import default_config, parse_config
from macopt.exceptions import ConfigError

IDEAL_PAIR = {"users": [{"battery_energy": 1.25, "circuit_cost": 0.5, "model": {"kind": "ideal"}}] * 2}


def write(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# -- config ------------------------------------------------------------------
def test_config_round_trip():
    cfg = default_config(3)
    assert parse_config(cfg.to_dict()) == cfg


@pytest.mark.parametrize("data", [
    {"users": [], "horizon": 1},
    {"users": [{"battery_energy": 1, "circuit_cost": 0}], "extra": 1},
    {"users": [{"battery_energy": 1, "circuit_cost": 0}], "solver": {"tolerance": 1e-6, "x": 1}},
    {"users": [{"battery_energy": 1, "circuit_cost": 0}], "sweep": {"r_values": [-1]}},
    {"users": [{"battery_energy": 1, "circuit_cost": 0}], "strategy": "cdma"},
    {"users": [{"battery_energy": -1, "circuit_cost": 0}]},
    {"users": [{"battery_energy": 1, "circuit_cost": 0, "model": {"kind": "quadratic", "ohms": 1}}]},
])
def test_config_rejects(data):
    with pytest.raises(ConfigError):
        parse_config(data)


def test_r_range():
    assert parse_r_range("0:1:0.25") == [0.0, 0.25, 0.5, 0.75, 1.0]
    with pytest.raises(ConfigError):
        parse_r_range("1:0:0.1")


# -- commands ----------------------------------------------------------------
def test_single_user_ideal(tmp_path, capsys):
    cfg = write(tmp_path, {"users": IDEAL_PAIR["users"][:1]})
    out = tmp_path / "su.csv"
    assert main(["single-user", "--config", cfg, "--out", str(out)]) == 0
    header, values = rows(out)
    tau = float(values[header.index("duration")])
    assert tau == pytest.approx(0.755, abs=5e-3)
    assert "stationarity_residual" in capsys.readouterr().out


def test_single_user_infeasible(tmp_path, capsys):
    cfg = write(tmp_path, {"users": [{"battery_energy": 1, "circuit_cost": 9,
                                      "model": {"kind": "quadratic", "resistance": 0.5}}]})
    assert main(["single-user", "--config", cfg]) == 2
    assert "infeasible" in capsys.readouterr().out


def test_single_user_needs_one_user(tmp_path):
    assert main(["single-user", "--config", write(tmp_path, IDEAL_PAIR)]) == 1


def test_sum_rate_defaults(tmp_path, capsys):
    out = tmp_path / "s.csv"
    assert main(["sum-rate", "--resistance", "1.0", "--out", str(out)]) == 0
    table = dict(rows(out)[1:])
    assert float(table["hybrid"]) == pytest.approx(0.247928, abs=1e-5)
    assert "dominance hybrid >= max(noma, tdma): pass" in capsys.readouterr().out


def test_sum_rate_nats(capsys):
    assert main(["sum-rate", "--resistance", "0", "--unit", "nats"]) == 0
    text = capsys.readouterr().out
    assert "rate_nats" in text and "1.44691" in text


def test_malformed_config(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["sum-rate", "--config", str(bad)]) == 1
    assert main(["sum-rate", "--config", str(tmp_path / "missing.json")]) == 1


def test_sweep_rows_and_determinism(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["sweep", "--r-values", "0,0.6,0.6"]
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    table = rows(a)
    assert table[0] == ["r", "noma_bits", "tdma_bits", "hybrid_bits"]
    assert table[2] == table[3]
    assert float(table[2][1]) == pytest.approx(1.0, abs=1e-6)


def test_sweep_empty_list(tmp_path):
    out = tmp_path / "e.csv"
    assert main(["sweep", "--r-values", "", "--out", str(out)]) == 0
    assert out.read_text() == "r,noma_bits,tdma_bits,hybrid_bits\n"


def test_sweep_threads_keep_order(tmp_path, monkeypatch):
    out1, out4 = tmp_path / "1.csv", tmp_path / "4.csv"
    main(["sweep", "--r-range", "0:0.5:0.1", "--out", str(out1)])
    monkeypatch.setenv("MACOPT_THREADS", "4")
    main(["sweep", "--r-range", "0:0.5:0.1", "--out", str(out4)])
    assert out1.read_bytes() == out4.read_bytes()


def test_sweep_uses_config_r_values(tmp_path):
    cfg = write(tmp_path, dict(IDEAL_PAIR, sweep={"r_values": [0.2, 0.1]}))
    out = tmp_path / "c.csv"
    assert main(["sweep", "--config", cfg, "--out", str(out)]) == 0
    assert [r[0] for r in rows(out)[1:]] == ["0.2", "0.1"]


def test_region_outputs(tmp_path):
    cfg = write(tmp_path, {"users": [{"battery_energy": 1.25, "circuit_cost": 0.5,
                                      "model": {"kind": "quadratic", "resistance": 0.5}}] * 2})
    out = tmp_path / "reg.csv"
    assert main(["region", "--config", cfg, "--points", "4", "--out", str(out)]) == 0
    table = rows(out)
    assert table[0] == ["strategy", "r1_bits", "r2_bits", "label"]
    labels = {r[3] for r in table[1:] if r[0] == "hybrid"}
    assert {"A", "B", "C", "D"} <= labels
    doc = json.loads(out.with_suffix(".json").read_text())
    assert set(doc["regions"]) == {"noma", "tdma", "hybrid"}
    hyb = doc["regions"]["hybrid"]["points"]
    assert max(a + b for a, b in hyb) == pytest.approx(0.864521, abs=1e-3)


def test_region_needs_two_users(tmp_path):
    cfg = write(tmp_path, {"users": IDEAL_PAIR["users"] * 2})
    assert main(["region", "--config", cfg]) == 1


def test_verify_suite(tmp_path):
    out = tmp_path / "v.json"
    assert main(["verify", "prop1", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["passed"] and doc["suites"][0]["suite"] == "prop1"


def test_verify_failure_exit_code(monkeypatch, capsys):
    from macopt import verify

    def broken():
        res = verify.SuiteResult("lemma2")
        res.add("forced", False, 0.0, 1.0)
        return res

    monkeypatch.setitem(verify.SUITES, "lemma2", broken)
    assert main(["verify", "lemma2"]) == 4
    assert json.loads(capsys.readouterr().out)["passed"] is False


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "macopt", "sum-rate", "--resistance", "0.6"],
                          capture_output=True, text=True, check=True)
    assert "noma,1" in proc.stdout
