import json
import filecmp

import pytest

from uavlink.cli import main
from uavlink.config import DEFAULT_CONFIG_TOML, load_config, parse_config_text


FAST_SCENARIO = """
[scenario]
n_nodes = 4
duration_s = 60.0
seed = 9

[[anomaly]]
kind = "total_failure"
node = 2
t_start = 20.0
t_end = 40.0
"""


@pytest.fixture()
def fast_config(tmp_path):
    path = tmp_path / "scenario.toml"
    path.write_text(FAST_SCENARIO)
    return str(path)


def test_default_config_parses():
    scenario, params = parse_config_text(DEFAULT_CONFIG_TOML)
    assert scenario.n_nodes == 4
    assert scenario.sim_duration_s == 300.0
    assert scenario.seed == 42
    assert scenario.anomalies[0].kind == "total_failure"
    assert params.correlation == "spearman"
    assert params.tau == 0.5 and params.alpha == 0.05 and params.window_len == 30


def test_shipped_config_matches_builtin():
    import pathlib

    shipped = pathlib.Path(__file__).resolve().parents[1] / "scenario.toml"
    scenario, params = load_config(shipped)
    builtin_s, builtin_p = parse_config_text(DEFAULT_CONFIG_TOML)
    assert scenario == builtin_s
    assert params == builtin_p


def test_simulate_writes_artifacts(fast_config, tmp_path):
    out = tmp_path / "out"
    rc = main(["simulate", "--config", fast_config, "--out-dir", str(out)])
    assert rc == 0
    for name in ("trace.csv", "positions.csv", "ground_truth.json", "manifest.json"):
        assert (out / name).exists(), name
    manifest = json.loads((out / "manifest.json").read_text())
    for path in manifest["artifacts"].values():
        assert json.loads(json.dumps(path))  # path strings
    truth = json.loads((out / "ground_truth.json").read_text())
    assert truth["events"][0]["node"] == 2


def test_invalid_config_exits_2(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[scenario]\nduration_s = 0.0\n")
    rc = main(["simulate", "--config", str(bad), "--out-dir", str(tmp_path / "o")])
    assert rc == 2
    bad.write_text("not toml [")
    rc = main(["simulate", "--config", str(bad), "--out-dir", str(tmp_path / "o")])
    assert rc == 2


def test_same_seed_byte_identical_trace(fast_config, tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", fast_config, "--out-dir", str(out1)]) == 0
    assert main(["simulate", "--config", fast_config, "--out-dir", str(out2)]) == 0
    assert filecmp.cmp(out1 / "trace.csv", out2 / "trace.csv", shallow=False)
    assert filecmp.cmp(out1 / "positions.csv", out2 / "positions.csv", shallow=False)


def test_full_pipeline_composes(fast_config, tmp_path):
    out = tmp_path / "run"
    rc = main(["run", "--config", fast_config, "--out-dir", str(out)])
    assert rc == 0
    expected = [
        "trace.csv", "positions.csv", "ground_truth.json", "metrics.csv",
        "verdicts.json", "heatmap_sh_prr.csv", "heatmap_sh_prr.pgm",
        "localization.json", "ranking.json", "report.txt", "manifest.json",
    ]
    for name in expected:
        assert (out / name).exists(), name
    report = (out / "report.txt").read_text()
    assert "best relation" in report
    ranking = json.loads((out / "ranking.json").read_text())
    assert {r["mr"] for r in ranking} >= {"MR1", "MR7", "MR8", "MRQ"}
    # the final manifest accumulates all three stages and every path exists
    manifest = json.loads((out / "manifest.json").read_text())
    assert {"trace", "verdicts", "ranking"} <= set(manifest["artifacts"])
    import pathlib

    for path in manifest["artifacts"].values():
        assert pathlib.Path(path).exists(), path


def test_detect_accepts_external_trace(tmp_path):
    """Any producer emitting the documented schema is a valid input."""
    trace = tmp_path / "ext.csv"
    trace.write_text(
        "link_src,link_dst,seq,t_enqueue,t_tx_start,t_rx_end,outcome,"
        "rssi_dbm,sinr_db,lqi,retries,distance_m\n"
        "1,0,0,0.100000000,0.110000000,0.150000000,delivered,-80.0,20.0,170,0,150.0\n"
        "1,0,1,0.200000000,0.210000000,0.250000000,delivered,-80.5,19.5,168,0,151.0\n"
    )
    positions = tmp_path / "pos.csv"
    lines = ["t,node_id,x,y,z"]
    for k in range(11):
        t = k * 0.1
        for node, x in enumerate((0.0, 150.0, 300.0)):
            lines.append(f"{t:.3f},{node},{x:.1f},0.0,0.0")
    positions.write_text("\n".join(lines) + "\n")
    out = tmp_path / "out"
    rc = main(["detect", "--trace", str(trace), "--positions", str(positions), "--out-dir", str(out)])
    assert rc == 0
    verdicts = json.loads((out / "verdicts.json").read_text())
    assert verdicts["verdicts"] == []  # too short for any window
    loc = json.loads((out / "localization.json").read_text())
    assert loc == {"detected": False}


def test_detect_empty_trace_is_ok(tmp_path):
    trace = tmp_path / "empty.csv"
    trace.write_text(
        "link_src,link_dst,seq,t_enqueue,t_tx_start,t_rx_end,outcome,"
        "rssi_dbm,sinr_db,lqi,retries,distance_m\n"
    )
    positions = tmp_path / "pos.csv"
    lines = ["t,node_id,x,y,z"]
    for k in range(3):
        for node in range(3):
            lines.append(f"{k:.3f},{node},{node*100.0:.1f},0.0,10.0")
    positions.write_text("\n".join(lines) + "\n")
    out = tmp_path / "out"
    rc = main(["detect", "--trace", str(trace), "--positions", str(positions), "--out-dir", str(out)])
    assert rc == 0
    assert json.loads((out / "verdicts.json").read_text())["verdicts"] == []


def test_detect_schema_violation_exits_2(tmp_path, capsys):
    trace = tmp_path / "bad.csv"
    trace.write_text(
        "link_src,link_dst,seq,t_enqueue,t_tx_start,t_rx_end,outcome,"
        "rssi_dbm,sinr_db,lqi,retries,distance_m\n"
        "1,0,0,0.1,0.2,0.3,banana,,,,0,\n"
    )
    positions = tmp_path / "pos.csv"
    positions.write_text("t,node_id,x,y,z\n0.000,0,0.0,0.0,0.0\n")
    rc = main(["detect", "--trace", str(trace), "--positions", str(positions), "--out-dir", str(tmp_path / "o")])
    assert rc == 2
    err = capsys.readouterr().err
    assert "row 2" in err and "outcome" in err


def test_evaluate_rejects_mismatched_run_ids(fast_config, tmp_path):
    out = tmp_path / "run"
    assert main(["run", "--config", fast_config, "--out-dir", str(out)]) == 0
    verdicts = json.loads((out / "verdicts.json").read_text())
    verdicts["run_id"] = "something-else"
    (out / "verdicts2.json").write_text(json.dumps(verdicts))
    rc = main([
        "evaluate",
        "--verdicts", str(out / "verdicts2.json"),
        "--truth", str(out / "ground_truth.json"),
        "--out-dir", str(out),
    ])
    assert rc == 2


def test_outputs_re_readable_by_own_parsers(fast_config, tmp_path):
    from uavlink.traceio import (
        read_ground_truth_json, read_metrics_csv, read_positions_csv,
        read_trace_csv, read_verdicts_json,
    )

    out = tmp_path / "run"
    assert main(["run", "--config", fast_config, "--out-dir", str(out)]) == 0
    assert read_trace_csv(out / "trace.csv")
    read_positions_csv(out / "positions.csv")
    assert read_metrics_csv(out / "metrics.csv")
    verdicts, run_id = read_verdicts_json(out / "verdicts.json")
    truth, truth_id = read_ground_truth_json(out / "ground_truth.json")
    assert verdicts and truth and run_id == truth_id


def test_print_config_command(capsys):
    assert main(["print-config"]) == 0
    assert capsys.readouterr().out == DEFAULT_CONFIG_TOML


def test_cli_flag_overrides(fast_config, tmp_path):
    out = tmp_path / "o"
    rc = main([
        "run", "--config", fast_config, "--out-dir", str(out),
        "--tau", "0.9", "--corr", "pearson", "--no-spline", "--parallel", "2", "--seed", "11",
    ])
    assert rc == 0
    doc = json.loads((out / "verdicts.json").read_text())
    assert doc["params"]["tau"] == 0.9
    assert doc["params"]["correlation"] == "pearson"
    assert doc["params"]["spline"] is False


def test_parallel_detection_output_matches_serial(fast_config, tmp_path):
    out1, out2 = tmp_path / "serial", tmp_path / "fanned"
    assert main(["run", "--config", fast_config, "--out-dir", str(out1)]) == 0
    assert main(["run", "--config", fast_config, "--out-dir", str(out2), "--parallel", "4"]) == 0
    assert (out1 / "verdicts.json").read_bytes() == (out2 / "verdicts.json").read_bytes()
    assert (out1 / "ranking.json").read_bytes() == (out2 / "ranking.json").read_bytes()
