import json
import os

import pytest

from memlearn.cli import main as cli_main
from memlearn.harness import (
    ConfigError,
    MetricsReport,
    compare,
    config_hash,
    emit,
    run_experiment,
    validate_config,
)


def prefetch_config(policies=("none", "stride"), **extra):
    cfg = {
        "version": 1,
        "kind": "prefetch",
        "seed": 7,
        "trace": {"generator": "stride", "length": 2000,
                  "params": {"stride": 2}},
        "policies": list(policies),
    }
    cfg.update(extra)
    return cfg


def hss_config(policies=("fast_only", "slow_only", "recency")):
    return {
        "version": 1,
        "kind": "hss",
        "seed": 11,
        "trace": {"generator": "hot_cold", "length": 1500,
                  "params": {"hot_set": 128, "footprint": 4096,
                             "gap_us": 2000}},
        "policies": list(policies),
    }


def offchip_config(policies=("none", "ttp", "popet")):
    return {
        "version": 1,
        "kind": "offchip",
        "seed": 3,
        "trace": {"generator": "mixed_pc_stride", "length": 2000,
                  "params": {"pc_count": 3, "noise_fraction": 0.3,
                             "footprint": 8192}},
        "policies": list(policies),
    }


def test_unknown_top_level_key_rejected():
    cfg = prefetch_config()
    cfg["tracee"] = {}
    with pytest.raises(ConfigError, match="tracee"):
        validate_config(cfg)


def test_unknown_nested_key_rejected():
    cfg = prefetch_config()
    cfg["sim"] = {"mtp": 100}
    with pytest.raises(ConfigError, match="mtp"):
        validate_config(cfg)


def test_unknown_policy_rejected():
    with pytest.raises(ConfigError, match="sibyl"):
        validate_config(prefetch_config(policies=("sibyl",)))


def test_seed_mandatory():
    cfg = prefetch_config()
    del cfg["seed"]
    with pytest.raises(ConfigError, match="seed"):
        validate_config(cfg)


def test_no_prefetch_policy_has_zero_coverage():
    report = run_experiment(prefetch_config(policies=("none",)))
    row = report.rows[0]
    assert row.metrics["coverage"] == 0.0
    assert row.metrics["prefetches_issued"] == 0


def test_hss_normalized_latencies():
    report = run_experiment(hss_config(policies=("fast_only", "slow_only")))
    by = {r.policy: r.metrics for r in report.rows}
    assert by["fast_only"]["normalized_latency_vs_fast_only"] == pytest.approx(1.0)
    assert by["slow_only"]["normalized_latency_vs_fast_only"] > 1.0


def test_rerun_is_byte_identical():
    cfg = hss_config(policies=("fast_only", "recency"))
    a = run_experiment(cfg)
    b = run_experiment(cfg)
    assert a.to_structured() == b.to_structured()
    assert a.to_table() == b.to_table()
    assert a.to_plotdata() == b.to_plotdata()


def test_config_hash_in_meta_and_stable():
    cfg = prefetch_config(policies=("none",))
    report = run_experiment(cfg)
    assert report.meta["config_hash"] == config_hash(cfg)


def test_matrix_expands_mtps_cross_product():
    cfg = prefetch_config(policies=("none", "stride"),
                          matrix={"mtps": [1600, 100]})
    report = run_experiment(cfg)
    assert [r.mtps for r in report.rows] == [1600, 1600, 100, 100]
    assert [r.policy for r in report.rows] == ["none", "stride"] * 2


def test_plotdata_columns_are_policies_in_config_order():
    report = run_experiment(offchip_config(policies=("ttp", "none")))
    header = report.to_plotdata().splitlines()[0]
    assert header == "metric,ttp,none"


def test_empty_policy_list_gives_header_only():
    report = run_experiment(prefetch_config(policies=()))
    assert report.rows == []
    lines = report.to_plotdata().splitlines()
    assert lines[0] == "metric"
    table = report.to_table().splitlines()
    assert table[1].startswith("policy")


def test_structured_round_trips():
    report = run_experiment(offchip_config(policies=("none", "ttp")))
    text = report.to_structured()
    again = MetricsReport.from_structured(text)
    assert again.to_structured() == text


def test_emit_writes_files(tmp_path):
    report = run_experiment(prefetch_config(policies=("none",)))
    for fmt, names in (("table", ["report.txt"]),
                       ("structured", ["report.json"])):
        paths = emit(report, fmt, tmp_path / fmt)
        assert [os.path.basename(p) for p in paths] == names
    paths = emit(report, "plotdata", tmp_path / "plotdata")
    assert os.path.basename(paths[0]) == "plotdata.csv"
    figs = [p for p in paths if p.endswith(".png")]
    assert figs, "plotdata output renders figures alongside the CSV"


def test_compare_self_is_all_ones():
    report = run_experiment(hss_config(policies=("fast_only",)))
    text = compare([report], baseline="fast_only")
    data_line = text.splitlines()[2]
    cells = data_line.split()
    assert cells[0] == "fast_only"
    assert all(c in ("1", "-") for c in cells[1:])


def test_compare_missing_baseline_errors():
    report = run_experiment(hss_config(policies=("fast_only",)))
    with pytest.raises(ConfigError, match="recency"):
        compare([report], baseline="recency")


def test_compare_flags_non_numeric_cells():
    report = run_experiment(prefetch_config(policies=("none", "stride")))
    text = compare([report], baseline="none")
    assert "-" in text  # modal_offset/np_fraction are blank for both


def test_cli_gen_trace_and_run_and_compare(tmp_path, capsys):
    spec = {"generator": "stride", "length": 500, "seed": 1,
            "params": {"stride": 3}}
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(spec))
    trace_path = tmp_path / "t.trace"
    assert cli_main(["gen-trace", str(spec_path), str(trace_path)]) == 0
    assert trace_path.read_text().startswith("memaccess,v1")

    cfg = prefetch_config(policies=("none", "stride"))
    cfg["trace"] = {"path": str(trace_path)}
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    out_dir = tmp_path / "out"
    rc = cli_main(["run", str(cfg_path), "--out", str(out_dir),
                   "--format", "structured"])
    assert rc == 0
    report_path = out_dir / "report.json"
    assert report_path.exists()

    rc = cli_main(["compare", str(report_path), "--baseline", "none"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "stride" in out


def test_cli_seed_override_changes_hash(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(prefetch_config(policies=("none",))))
    for seed, sub in ((1, "a"), (2, "b")):
        assert cli_main(["run", str(cfg_path), "--out", str(tmp_path / sub),
                         "--format", "structured", "--seed", str(seed)]) == 0
    a = json.loads((tmp_path / "a" / "report.json").read_text())
    b = json.loads((tmp_path / "b" / "report.json").read_text())
    assert a["meta"]["config_hash"] != b["meta"]["config_hash"]


def test_cli_bad_config_exit_code(tmp_path, capsys):
    cfg_path = tmp_path / "bad.json"
    cfg_path.write_text(json.dumps({"version": 1}))
    assert cli_main(["run", str(cfg_path)]) == 1
    assert "error:" in capsys.readouterr().err


def test_trace_path_and_generator_mutually_exclusive():
    cfg = prefetch_config()
    cfg["trace"] = {"path": "x", "generator": "stride", "length": 5}
    with pytest.raises(ConfigError):
        validate_config(cfg)
