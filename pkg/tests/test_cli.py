"""Command-line driver: artifact files, validation mode, exit codes."""

import json
import os

import pytest

from tclmarket.cli import BUILTIN_SCENARIOS, builtin_scenario, main
from tclmarket.engine import PopulationSpec, PriceSignal, Scenario, ScenarioError


@pytest.fixture()
def small_file(tmp_path):
    scenario = Scenario(
        name="cli-small",
        population=PopulationSpec(count=16),
        price_signal=PriceSignal.square(low=20.0, high=30.0, period_min=10.0),
        horizon_min=60.0,
        seed=7,
    )
    path = tmp_path / "small.json"
    path.write_text(scenario.to_json())
    return str(path)


def read_lines(path):
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read().splitlines()


def test_run_writes_default_artifacts(small_file, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["--scenario", small_file, "--out", str(out)]) == 0
    names = sorted(os.listdir(out))
    assert names == [
        "bids_sample.csv", "metrics.csv", "scenario.json", "trace.csv", "windows.csv",
    ]
    trace_lines = read_lines(out / "trace.csv")
    assert trace_lines[0].split(",")[:4] == [
        "interval", "time_min", "base_price_usd_per_mwh", "clearing_price_usd_per_mwh",
    ]
    assert len(trace_lines) == 1 + 12   # header + one row per market interval
    # 16 TCLs -> the bid sample covers all of them
    bids_header = read_lines(out / "bids_sample.csv")[0].split(",")
    assert len(bids_header) == 2 + 16
    summary = capsys.readouterr().out
    assert "feeder hits" in summary
    assert "max sync index" in summary


def test_scenario_echo_reflects_seed_override(small_file, tmp_path):
    out = tmp_path / "out"
    assert main(["--scenario", small_file, "--seed", "3", "--out", str(out)]) == 0
    echoed = json.loads((out / "scenario.json").read_text())
    assert echoed["seed"] == 3
    assert Scenario.from_dict(echoed).population.count == 16


def test_emit_selects_outputs_and_decimates_steps(small_file, tmp_path):
    out = tmp_path / "out"
    rc = main([
        "--scenario", small_file, "--out", str(out),
        "--emit", "trace,steps", "--decimate", "6",
    ])
    assert rc == 0
    names = sorted(os.listdir(out))
    assert names == ["scenario.json", "steps.csv", "trace.csv"]
    # 12 intervals x 30 steps, keeping every 6th record
    assert len(read_lines(out / "steps.csv")) == 1 + 360 // 6


def test_missing_scenario_file_names_it(capsys):
    assert main(["--scenario", "no/such/file.json"]) == 1
    err = capsys.readouterr().err
    assert "no/such/file.json" in err
    assert "not found" in err


def test_unknown_builtin_lists_available_names():
    with pytest.raises(ScenarioError) as exc:
        builtin_scenario("mystery")
    for name in BUILTIN_SCENARIOS:
        assert name in str(exc.value)


def test_all_builtin_scenarios_validate():
    for name, factory in BUILTIN_SCENARIOS.items():
        scenario = factory()
        assert scenario.name == name
        assert scenario.validate() == []


def test_validate_only_accepts_and_echoes(small_file, capsys):
    assert main(["--scenario", small_file, "--validate-only"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("OK")
    assert '"cli-small"' in out


def test_validate_only_reports_every_violation(tmp_path, capsys):
    # 290 s market interval: horizon misaligned AND the step time off-boundary
    bad = Scenario(
        market_interval_min=290.0 / 60.0,
        price_signal=PriceSignal.step([(0.0, 42.0), (360.0, 20.0)]),
    )
    path = tmp_path / "bad.json"
    path.write_text(bad.to_json())
    assert main(["--scenario", str(path), "--validate-only"]) == 1
    lines = [l for l in capsys.readouterr().out.splitlines() if l.startswith("violation:")]
    assert len(lines) == 2


def test_validate_only_flags_negative_feeder_limit(tmp_path, capsys):
    path = tmp_path / "neg.json"
    path.write_text(json.dumps({"feeder_limit_kw": -5}))
    assert main(["--scenario", str(path), "--validate-only"]) == 1
    out = capsys.readouterr().out
    assert "feeder_limit_kw" in out


def test_invalid_scenario_refuses_to_run(tmp_path, capsys):
    path = tmp_path / "neg.json"
    path.write_text(json.dumps({"feeder_limit_kw": -5}))
    assert main(["--scenario", str(path), "--out", str(tmp_path / "o")]) == 1
    assert "invalid scenario" in capsys.readouterr().err


def test_repeat_runs_are_byte_identical(small_file, tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["--scenario", small_file, "--out", str(out1)]) == 0
    assert main(["--scenario", small_file, "--out", str(out2)]) == 0
    for name in ("trace.csv", "metrics.csv", "windows.csv", "bids_sample.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_seed_changes_the_trace(small_file, tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["--scenario", small_file, "--seed", "1", "--out", str(out1)]) == 0
    assert main(["--scenario", small_file, "--seed", "2", "--out", str(out2)]) == 0
    assert (out1 / "trace.csv").read_bytes() != (out2 / "trace.csv").read_bytes()


def test_bad_flag_values_exit_2(small_file, capsys):
    assert main(["--scenario", small_file, "--decimate", "0"]) == 2
    assert main(["--scenario", small_file, "--emit", "trace,bogus"]) == 2
    err = capsys.readouterr().err
    assert "--decimate" in err
    assert "bogus" in err


def test_env_var_supplies_output_root(small_file, tmp_path, monkeypatch):
    target = tmp_path / "from_env"
    monkeypatch.setenv("TCLMARKET_OUT", str(target))
    assert main(["--scenario", small_file, "--emit", "trace"]) == 0
    assert (target / "trace.csv").exists()
