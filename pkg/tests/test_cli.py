import csv
import json
import shutil
import subprocess

import pytest

from liftedfilter.cli import main
from liftedfilter.scenarios import bundled_path, read_trace


def _rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def _stderr_json(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_sample_writes_trace(tmp_path, capsys):
    out = tmp_path / "w.trace"
    assert main(["sample", "--scenario", "warehouse", "--seed", "7", "--horizon", "33", "--out", str(out)]) == 0
    header, obs, truths = read_trace(out)
    assert header["horizon"] == 33 and len(obs) == 34 and len(truths) == 34
    printed = capsys.readouterr().out
    assert "t=33 " in printed and "t=34 " not in printed


def test_sample_default_path(tmp_path):
    assert main(["sample", "--scenario", "office", "--seed", "1", "--horizon", "20", "--out-dir", str(tmp_path)]) == 0
    _, obs, _ = read_trace(tmp_path / "office-seed1.trace")
    assert len(obs) == 21


def test_missing_scenario_is_a_config_error(tmp_path, capsys):
    assert main(["sample", "--seed", "1", "--out-dir", str(tmp_path)]) == 2
    assert _stderr_json(capsys)["error"] == "ConfigError"
    assert main(["filter", "--scenario", "nowhere", "--seed", "1", "--out-dir", str(tmp_path)]) == 2
    assert main(["filter", "--scenario", "warehouse", "--out-dir", str(tmp_path)]) == 2
    assert main(["frobnicate"]) == 2


def test_filter_outputs(tmp_path):
    code = main(["filter", "--scenario", "warehouse", "--param", "n=3", "--seed", "2", "--horizon", "6",
                 "--query", "ID=fl1:loc", "--out-dir", str(tmp_path)])
    assert code == 0
    metrics = _rows(tmp_path / "metrics.csv")
    assert [r["t"] for r in metrics] == [str(t) for t in range(7)]
    assert all(r["ms"] == "" for r in metrics)
    marginals = _rows(tmp_path / "marginals.csv")
    assert set(marginals[0]) == {"engine", "query", "t", "value", "probability"}
    for t in range(7):
        total = sum(float(r["probability"]) for r in marginals if r["t"] == str(t))
        assert total == pytest.approx(1, abs=1e-12)
    lines = (tmp_path / "metrics.jsonl").read_text().splitlines()
    assert len(lines) == 7 and json.loads(lines[0])["engine"] == "lifted"


def test_timing_fills_ms(tmp_path):
    assert main(["filter", "--scenario", "warehouse", "--param", "n=3", "--seed", "2", "--horizon", "2",
                 "--timing", "--out-dir", str(tmp_path)]) == 0
    assert all(float(r["ms"]) >= 0 for r in _rows(tmp_path / "metrics.csv"))


def test_filter_from_trace_and_scenario_file(tmp_path):
    trace = tmp_path / "o.trace"
    assert main(["sample", "--scenario-file", str(bundled_path("office")), "--seed", "3", "--horizon", "4",
                 "--out", str(trace)]) == 0
    assert main(["filter", "--scenario-file", str(bundled_path("office")), "--trace", str(trace),
                 "--engine", "both", "--out-dir", str(tmp_path)]) == 0
    engines = [r["engine"] for r in _rows(tmp_path / "metrics.csv")]
    assert engines == ["lifted"] * 5 + ["grounded"] * 5


def test_unmerged_report_is_never_smaller(tmp_path):
    args = ["filter", "--scenario", "warehouse", "--param", "n=3", "--seed", "4", "--horizon", "8"]
    assert main(args + ["--out-dir", str(tmp_path / "m")]) == 0
    assert main(args + ["--report-unmerged", "--out-dir", str(tmp_path / "u")]) == 0
    for m, u in zip(_rows(tmp_path / "m" / "metrics.csv"), _rows(tmp_path / "u" / "metrics.csv")):
        assert int(u["n_hyp_post_predict"]) >= int(m["n_hyp_post_predict"])


def test_oracle_command(tmp_path):
    assert main(["oracle", "--scenario", "warehouse", "--param", "n=3", "--seed", "1", "--horizon", "3",
                 "--out-dir", str(tmp_path)]) == 0
    assert {r["engine"] for r in _rows(tmp_path / "metrics.csv")} == {"grounded"}


def test_compare_equal(tmp_path, capsys):
    assert main(["compare", "--scenario", "warehouse", "--param", "n=3", "--seed", "5", "--horizon", "6",
                 "--out-dir", str(tmp_path)]) == 0
    assert capsys.readouterr().out.startswith("max_abs_diff=0.0 ")
    rows = _rows(tmp_path / "compare.csv")
    assert len(rows) == 7
    assert all(float(r["max_abs_diff"]) == 0 for r in rows)
    assert all(int(r["lifted_hyp_update"]) <= int(r["grounded_hyp_update"]) for r in rows)


def test_compare_horizon_zero(tmp_path):
    assert main(["compare", "--scenario", "office", "--param", "items=reduced", "--seed", "0", "--horizon", "0",
                 "--out-dir", str(tmp_path)]) == 0
    assert len(_rows(tmp_path / "compare.csv")) == 1


def test_compare_detects_difference(tmp_path, capsys):
    # pruning under noisy sensors changes the lifted marginals, so compare must fail
    code = main(["compare", "--scenario", "warehouse", "--param", "n=3", "--param", "fp=1/10", "--param", "fn=1/10",
                 "--seed", "1", "--horizon", "5", "--prune", "0.05", "--out-dir", str(tmp_path)])
    assert code == 1
    assert _stderr_json(capsys)["error"] == "CompareMismatch"


def test_impossible_observation_exit(tmp_path, capsys):
    trace = tmp_path / "bad.trace"
    trace.write_text(json.dumps({"t": 0, "sensors": {"presence_parking": False}}) + "\n")
    code = main(["filter", "--scenario", "warehouse", "--param", "n=3", "--trace", str(trace),
                 "--out-dir", str(tmp_path)])
    assert code == 3
    diag = _stderr_json(capsys)
    assert diag["error"] == "ImpossibleObservation" and diag["t"] == 0


def test_unknown_sensor_in_trace(tmp_path):
    trace = tmp_path / "bad.trace"
    trace.write_text(json.dumps({"t": 0, "sensors": {"presence_moon": False}}) + "\n")
    assert main(["filter", "--scenario", "warehouse", "--trace", str(trace), "--out-dir", str(tmp_path)]) == 2


def test_guard_exit(tmp_path, capsys):
    code = main(["filter", "--scenario", "warehouse", "--param", "n=3", "--seed", "1", "--horizon", "5",
                 "--guard", "3", "--out-dir", str(tmp_path)])
    assert code == 4
    diag = _stderr_json(capsys)
    assert diag["error"] == "ExplosionGuard" and diag["count"] > 3 and diag["limit"] == 3


def test_validate(tmp_path, capsys):
    assert main(["validate", "--scenario-file", str(bundled_path("warehouse"))]) == 0
    assert "10 entities" in capsys.readouterr().out
    bad = tmp_path / "bad.scn"
    bad.write_text("{")
    assert main(["validate", "--scenario-file", str(bad)]) == 2
    assert _stderr_json(capsys)["error"] == "ParseError"


def test_repeat_runs_are_byte_identical(tmp_path):
    args = ["filter", "--scenario", "warehouse", "--param", "n=3", "--seed", "3", "--horizon", "8", "--engine", "both"]
    assert main(args + ["--out-dir", str(tmp_path / "a")]) == 0
    assert main(args + ["--out-dir", str(tmp_path / "b"), "--workers", "2"]) == 0
    for name in ("metrics.csv", "metrics.jsonl", "marginals.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


@pytest.mark.skipif(shutil.which("liftedfilter") is None, reason="console script not installed")
def test_console_script_exit_code(tmp_path):
    done = subprocess.run(["liftedfilter", "validate", "--scenario", "nowhere"], capture_output=True, text=True)
    assert done.returncode == 2
    assert json.loads(done.stderr)["error"] == "UnknownScenario"
