import csv
import json
import os

import pytest

from conftest import within_sigma
from main import main

SCENARIO_DIR = os.path.join(os.path.dirname(os.path.dirname(__file__)), "scenarios")


def scenario(name):
    return os.path.join(SCENARIO_DIR, name)


def write_scenario(tmp_path, payload, name="scenario.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload), encoding="utf-8")
    return str(path)


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.reader(f))


def metadata(out_dir):
    return json.loads((out_dir / "metadata.json").read_text(encoding="utf-8"))


# ===== analytic figures =====
def test_mutualinfo_defaults(out_dir):
    assert main(["--out", str(out_dir), "mutualinfo"]) == 0
    rows = read_csv(out_dir / "mutualinfo" / "mutual_info.csv")
    assert rows[0] == ["r", "i_ab", "i_ae"]
    assert len(rows) == 102
    for r, i_ab, i_ae in rows[1:]:
        assert float(i_ae) >= float(i_ab)
    meta = metadata(out_dir)["mutualinfo/mutual_info.csv"]["meta"]
    assert meta["r_threshold"] == pytest.approx(0.282, abs=1e-3)


def test_empty_grid_fails_before_running(tmp_path, out_dir):
    path = write_scenario(tmp_path, {"mutualinfo": {"r_values": []}})
    assert main(["--config", path, "--out", str(out_dir), "mutualinfo"]) == 2
    assert not (out_dir / "mutualinfo").exists()


def test_stealth_scan(out_dir, capsys):
    assert main(["--config", scenario("rie_default.json"), "--out", str(out_dir),
                 "stealth-scan"]) == 0
    rows = read_csv(out_dir / "scan" / "stealth_scan.csv")
    assert rows[0] == ["lambda_par_cps", "lambda_perp_cps", "r_bound", "stealthy"]
    assert len(rows) == 1 + 4 * 71
    meta = metadata(out_dir)["scan/stealth_scan.csv"]["meta"]
    assert 15e6 <= meta["crossings"]["1000000.0"] <= 35e6
    assert meta["invalid_rows"] > 0
    assert "lambda_par=1 Mcps" in capsys.readouterr().out


def test_analytic_summary(out_dir):
    assert main(["--config", scenario("rie_default.json"), "--out", str(out_dir), "analytic"]) == 0
    summary = json.loads((out_dir / "analytic" / "summary.json").read_text(encoding="utf-8"))
    assert summary["r"] < summary["r_threshold"]
    assert summary["stealthy"] is True
    assert summary["effective_r"] == pytest.approx(summary["r"])


def test_analytic_without_attack_matches_simulation(tmp_path, capsys):
    path = scenario("no_attack.json")
    analytic_dir, simulate_dir = tmp_path / "analytic_out", tmp_path / "simulate_out"
    assert main(["--config", path, "--out", str(analytic_dir), "analytic"]) == 0
    summary = json.loads((analytic_dir / "analytic" / "summary.json").read_text(encoding="utf-8"))
    assert summary["attack_mode"] == "none"
    assert summary["e_obs"] == 0.0
    assert summary["i_ae"] == 0.0
    assert summary["abort"] is False
    assert summary["r"] is None and summary["stealthy"] is None and summary["effective_r"] is None
    assert "r=n/a" in capsys.readouterr().out

    assert main(["--config", path, "--out", str(simulate_dir), "simulate"]) == 0
    report = load_report(simulate_dir)
    assert report["qber_observed"] == summary["e_obs"]
    assert report["abort"] is summary["abort"]


# ===== Monte Carlo =====
def load_report(out_dir):
    return json.loads((out_dir / "simulate" / "report.json").read_text(encoding="utf-8"))


def test_simulate_rie_ratio_point_two(out_dir):
    assert main(["--config", scenario("rie_r02.json"), "--out", str(out_dir), "simulate"]) == 0
    report = load_report(out_dir)
    assert within_sigma(report["n_errors"], report["n_sifted"], 0.2 / 2.4)
    assert report["abort"] is False


def test_simulate_intercept_resend(out_dir):
    assert main(["--config", scenario("intercept_resend.json"), "--out", str(out_dir),
                 "simulate"]) == 0
    report = load_report(out_dir)
    assert within_sigma(report["n_errors"], report["n_sifted"], 0.25)
    assert report["abort"] is True


def test_simulate_no_attack(out_dir):
    assert main(["--config", scenario("no_attack.json"), "--out", str(out_dir), "simulate"]) == 0
    report = load_report(out_dir)
    assert report["qber_observed"] == 0.0
    assert report["abort"] is False


def test_simulate_branch_table(out_dir):
    assert main(["--config", scenario("rie_r02.json"), "--out", str(out_dir), "simulate",
                 "--rounds", "100000", "--fixed-alice", "Z0"]) == 0
    rows = read_csv(out_dir / "simulate" / "branch_table.csv")
    assert len(rows) == 9
    assert load_report(out_dir)["fixed_alice"] == "Z0"


def test_simulate_is_byte_identical_across_workers(tmp_path):
    path = write_scenario(tmp_path, {
        "seed": 8,
        "protocol": {"n_rounds": 60000, "chunk_size": 20000},
        "attack": {"mode": "rie_non_deterministic", "lambda_perp": 3e7},
    })
    outputs = []
    for workers in ("1", "1", "2"):
        out = tmp_path / f"out_{len(outputs)}"
        assert main(["--config", path, "--out", str(out), "--workers", workers, "simulate"]) == 0
        outputs.append(out)
    for rel in ("simulate/report.json", "simulate/branches.csv", "metadata.json"):
        contents = {(o / rel).read_bytes() for o in outputs}
        assert len(contents) == 1


def test_bad_attack_mode_exits_2(tmp_path, out_dir):
    path = write_scenario(tmp_path, {"attack": {"mode": "bogus"}})
    assert main(["--config", path, "--out", str(out_dir), "simulate"]) == 2


# ===== timestamps =====
def test_generate_then_extract(tmp_path, out_dir, capsys):
    path = write_scenario(tmp_path, {
        "seed": 6,
        "generate": {"beta": 50e6, "duration": 0.005, "constant_t_d": 23.3e-9},
    })
    assert main(["--config", path, "--out", str(out_dir), "generate-timestamps"]) == 0
    tags = out_dir / "timestamps" / "timestamps.txt"
    assert tags.exists()
    info = metadata(out_dir)["timestamps/timestamps.txt"]
    assert info["size"] == tags.stat().st_size
    assert info["meta"]["n_timestamps"] == len(tags.read_text(encoding="utf-8").splitlines())

    assert main(["--out", str(out_dir), "deadtime-extract", str(tags), "--bin-width", "5e-10"]) == 0
    result = json.loads((out_dir / "extract" / "deadtime_estimate.json").read_text(encoding="utf-8"))
    assert 22.8e-9 <= result["t_d_estimate_s"] <= 23.8e-9
    hist = read_csv(out_dir / "extract" / "histogram.csv")
    assert hist[0] == ["bin_start_s", "count"]
    assert "t_d =" in capsys.readouterr().out


def test_extract_empty_file(tmp_path, out_dir, capsys):
    empty = tmp_path / "empty.txt"
    empty.write_text("", encoding="utf-8")
    assert main(["--out", str(out_dir), "deadtime-extract", str(empty)]) == 1
    assert "insufficient data" in capsys.readouterr().err


def test_extract_malformed_file(tmp_path, out_dir, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("10\n1.5.3\n", encoding="utf-8")
    assert main(["--out", str(out_dir), "deadtime-extract", str(bad)]) == 1
    assert "line 2" in capsys.readouterr().err


def test_extract_without_file_is_config_error(out_dir):
    assert main(["--out", str(out_dir), "deadtime-extract"]) == 2


# ===== sweep =====
def test_sweep_single_flat_rate(tmp_path, out_dir):
    path = write_scenario(tmp_path, {
        "dead_time_curve": {"preset": "flat"},
        "sweep": {"rates": [10e6], "events_per_point": 50000},
    })
    assert main(["--config", path, "--out", str(out_dir), "sweep-deadtime"]) == 0
    rows = read_csv(out_dir / "sweep" / "t_d_vs_rate.csv")
    assert rows[0] == ["lambda_obs_cps", "t_d_est_s"]
    assert len(rows) == 2
    assert abs(float(rows[1][1]) - 23.3e-9) <= 0.5e-9
    busy = read_csv(out_dir / "sweep" / "busy_fraction.csv")
    assert busy[0] == ["lambda_obs_cps", "busy_fraction"]
    assert 0 < float(busy[1][1]) < 1
