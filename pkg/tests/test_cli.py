import json
import subprocess
import sys

import numpy as np
import pytest

from driftlab import cli, core
from driftlab.core import StrategySpec


def run_cli(*argv) -> int:
    return cli.main(list(argv))


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def test_simulate_writes_expected_cardinality(tmp_path, capsys):
    out = tmp_path / "t.jsonl"
    code = run_cli("simulate", "--strategy", "AI", "--sessions", "5",
                   "--iterations", "10", "--seed", "7", "--out", str(out))
    assert code == 0
    records = [json.loads(line) for line in out.read_text().splitlines()]
    assert len(records) == 5 * 11
    summary = capsys.readouterr().out
    assert "sessions=5" in summary and "seed=7" in summary


def test_simulate_is_byte_deterministic(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    for out in (a, b):
        assert run_cli("simulate", "--strategy", "SF", "--sessions", "3",
                       "--iterations", "6", "--seed", "11", "--out", str(out)) == 0
    assert a.read_bytes() == b.read_bytes()


def test_simulate_unknown_strategy_is_usage_error(tmp_path, capsys):
    code = run_cli("simulate", "--strategy", "nope", "--out", str(tmp_path / "x.jsonl"))
    assert code == 2
    assert "unknown strategy" in capsys.readouterr().err


def test_simulate_custom_strategy_file(tmp_path):
    spec = StrategySpec("CUSTOM", np.diag([-0.5, -0.4, -0.3]),
                        [1.0, 1.0, 1.0], 0.2 * np.eye(3))
    spec_path = tmp_path / "custom.json"
    spec_path.write_text(json.dumps(spec.to_dict()))
    out = tmp_path / "c.jsonl"
    assert run_cli("simulate", "--strategy", str(spec_path), "--sessions", "2",
                   "--iterations", "4", "--seed", "1", "--out", str(out)) == 0
    trajs = core.read_trajectories(out)
    assert all(t.strategy_id == "CUSTOM" for t in trajs)


def test_simulate_config_file_defaults_and_flag_priority(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("sessions = 4\niterations = 3\nseed = 5\nstrategy = EF\n")
    out1 = tmp_path / "one.jsonl"
    assert run_cli("simulate", "--config", str(cfg), "--out", str(out1)) == 0
    trajs = core.read_trajectories(out1)
    assert len(trajs) == 4 and len(trajs[0].points) == 4
    assert trajs[0].strategy_id == "EF"
    # flags win over the file
    out2 = tmp_path / "two.jsonl"
    assert run_cli("simulate", "--config", str(cfg), "--sessions", "2",
                   "--out", str(out2)) == 0
    assert len(core.read_trajectories(out2)) == 2


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------

@pytest.fixture()
def simulated(tmp_path):
    out = tmp_path / "sims.jsonl"
    assert run_cli("simulate", "--strategy", "AI", "--sessions", "30",
                   "--iterations", "10", "--seed", "3", "--out", str(out)) == 0
    return out


def test_analyze_emits_full_bundle(tmp_path, simulated):
    out_dir = tmp_path / "bundle"
    assert run_cli("analyze", "--in", str(simulated), "--out", str(out_dir)) == 0
    names = {p.name for p in out_dir.iterdir()}
    assert names == {"drift.json", "interference.json", "spectrum.json",
                     "prediction.json", "pareto.csv"}
    drift_doc = json.loads((out_dir / "drift.json").read_text())
    assert drift_doc["schema_version"] == "1"
    assert "AI" in drift_doc["strategies"]
    csv_lines = (out_dir / "pareto.csv").read_text().splitlines()
    assert csv_lines[0] == "strategy,session_id,efficiency,eq_1,eq_2,eq_3"
    assert len(csv_lines) == 1 + 30


def test_analyze_is_byte_deterministic(tmp_path, simulated):
    d1, d2 = tmp_path / "r1", tmp_path / "r2"
    for d in (d1, d2):
        assert run_cli("analyze", "--in", str(simulated), "--out", str(d)) == 0
    for name in ("drift.json", "interference.json", "spectrum.json",
                 "prediction.json", "pareto.csv"):
        assert (d1 / name).read_bytes() == (d2 / name).read_bytes()


def test_analyze_one_step_dataset_fails_with_stage_name(tmp_path, capsys):
    path = tmp_path / "tiny.jsonl"
    lines = [json.dumps({"session_id": "s000", "strategy": "AI",
                         "iteration": t, "objectives": [5.0, 5.0, 5.0]})
             for t in range(2)]
    path.write_text("\n".join(lines) + "\n")
    code = run_cli("analyze", "--in", str(path), "--out", str(tmp_path / "r"))
    assert code == 1
    err = capsys.readouterr().err
    assert "drift" in err and "InsufficientData" in err


def test_analyze_only_subset(tmp_path, simulated):
    out_dir = tmp_path / "partial"
    assert run_cli("analyze", "--in", str(simulated), "--out", str(out_dir),
                   "--only", "interference,pareto") == 0
    assert {p.name for p in out_dir.iterdir()} == {"interference.json", "pareto.csv"}


def test_analyze_contractive_custom_strategy_reports_exponential(tmp_path):
    spec = StrategySpec("NEG", np.diag([-0.5, -0.4, -0.3]),
                        [2.5, 2.0, 1.5], 0.3 * np.eye(3))
    spec_path = tmp_path / "neg.json"
    spec_path.write_text(json.dumps(spec.to_dict()))
    data = tmp_path / "neg.jsonl"
    assert run_cli("simulate", "--strategy", str(spec_path), "--sessions", "200",
                   "--iterations", "10", "--seed", "19", "--out", str(data)) == 0
    out_dir = tmp_path / "negout"
    assert run_cli("analyze", "--in", str(data), "--out", str(out_dir)) == 0
    doc = json.loads((out_dir / "spectrum.json").read_text())
    assert doc["strategies"]["NEG"]["regime"] == "Exponential"


def test_analyze_strategy_filter(tmp_path, simulated, capsys):
    assert run_cli("analyze", "--in", str(simulated), "--strategy", "FF",
                   "--out", str(tmp_path / "x")) == 1
    assert "no sessions" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# control
# ---------------------------------------------------------------------------

def test_control_default_schedule_emits_switches(tmp_path):
    prefix = tmp_path / "run"
    assert run_cli("control", "--iterations", "10", "--seed", "4",
                   "--out", str(prefix)) == 0
    events = [json.loads(line)
              for line in (tmp_path / "run.events.jsonl").read_text().splitlines()]
    assert sum(e["kind"] == "PhaseSwitch" for e in events) >= 2
    trajs = core.read_trajectories(tmp_path / "run.jsonl")
    assert len(trajs) == 1 and len(trajs[0].points) == 11


def test_control_schedule_none_sigma_zero_quiet(tmp_path):
    prefix = tmp_path / "quiet"
    assert run_cli("control", "--iterations", "10", "--seed", "4",
                   "--schedule", "none", "--sigma", "0", "--out", str(prefix)) == 0
    assert (tmp_path / "quiet.events.jsonl").read_text() == ""


def test_control_halt_on_intervention(tmp_path):
    prefix = tmp_path / "halted"
    assert run_cli("control", "--iterations", "10", "--seed", "6",
                   "--schedule", "none", "--strategy", "FF",
                   "--halt-on-intervention", "--out", str(prefix)) == 0
    events = [json.loads(line)
              for line in (tmp_path / "halted.events.jsonl").read_text().splitlines()]
    interventions = [e for e in events if e["kind"] == "Intervention"]
    assert interventions
    first = min(e["iteration"] for e in interventions)
    trajs = core.read_trajectories(tmp_path / "halted.jsonl")
    assert len(trajs[0].points) - 1 == first


def test_control_schedule_file(tmp_path):
    sched = tmp_path / "sched.json"
    sched.write_text(json.dumps([["FF", 2, 3], ["AI", 1, None]]))
    prefix = tmp_path / "filed"
    assert run_cli("control", "--iterations", "8", "--seed", "1",
                   "--schedule", str(sched), "--out", str(prefix)) == 0
    events = [json.loads(line)
              for line in (tmp_path / "filed.events.jsonl").read_text().splitlines()]
    assert any(e["kind"] == "PhaseSwitch" and e["detail"].startswith("FF->AI")
               for e in events)


def test_control_malformed_schedule_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('[["FF", 3, 2]]')
    assert run_cli("control", "--schedule", str(bad),
                   "--out", str(tmp_path / "x")) == 2
    assert "schedule" in capsys.readouterr().err


def test_control_deterministic(tmp_path):
    p1, p2 = tmp_path / "d1", tmp_path / "d2"
    for p in (p1, p2):
        assert run_cli("control", "--iterations", "10", "--seed", "12",
                       "--out", str(p)) == 0
    assert (tmp_path / "d1.jsonl").read_bytes() == (tmp_path / "d2.jsonl").read_bytes()
    assert (tmp_path / "d1.events.jsonl").read_bytes() == (tmp_path / "d2.events.jsonl").read_bytes()


# ---------------------------------------------------------------------------
# score
# ---------------------------------------------------------------------------

def test_score_single_file(tmp_path, capsys):
    target = tmp_path / "sample.py"
    target.write_text("x = eval(input())\n")
    assert run_cli("score", "--src", str(target), "--expected-length", "5") == 0
    out = capsys.readouterr().out
    assert "security=3" in out


def test_score_json_output(tmp_path, capsys):
    target = tmp_path / "sample.py"
    target.write_text("def f():\n    return 1\n")
    assert run_cli("score", "--src", str(target), "--expected-length", "5",
                   "--json") == 0
    doc = json.loads(capsys.readouterr().out)
    assert set(doc) == {"security", "efficiency", "functionality", "rule_hits"}


def test_score_requires_src_or_manifest(capsys):
    assert run_cli("score") == 2


def test_score_manifest_without_metadata(tmp_path, capsys):
    f1 = tmp_path / "a.py"
    f1.write_text("x = 1\n")
    manifest = tmp_path / "m.csv"
    manifest.write_text(f"path,expected_length\n{f1},5\n")
    assert run_cli("score", "--manifest", str(manifest)) == 0
    rec = json.loads(capsys.readouterr().out.splitlines()[0])
    assert rec["path"] == str(f1)
    assert 0.0 <= rec["security"] <= 10.0


def test_score_manifest_with_metadata_emits_trajectories(tmp_path):
    files = []
    for i in range(3):
        f = tmp_path / f"iter{i}.py"
        f.write_text("def f():\n    return %d\n" % i)
        files.append(f)
    manifest = tmp_path / "m.csv"
    rows = ["path,expected_length,session_id,strategy,iteration"]
    rows += [f"{f},5,s000,AI,{i}" for i, f in enumerate(files)]
    manifest.write_text("\n".join(rows) + "\n")
    out = tmp_path / "scored.jsonl"
    assert run_cli("score", "--manifest", str(manifest), "--out", str(out)) == 0
    trajs = core.read_trajectories(out)
    assert len(trajs) == 1
    assert len(trajs[0].points) == 3
    assert trajs[0].strategy_id == "AI"


def test_missing_input_file_is_runtime_error(tmp_path, capsys):
    assert run_cli("score", "--src", str(tmp_path / "ghost.py")) == 1


# ---------------------------------------------------------------------------
# module execution and report formatting
# ---------------------------------------------------------------------------

def test_module_invocation_matches_direct_call(tmp_path):
    out = tmp_path / "m.jsonl"
    proc = subprocess.run(
        [sys.executable, "-m", "driftlab.cli", "simulate", "--strategy", "EF",
         "--sessions", "2", "--iterations", "3", "--seed", "8", "--out", str(out)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    direct = tmp_path / "d.jsonl"
    assert run_cli("simulate", "--strategy", "EF", "--sessions", "2",
                   "--iterations", "3", "--seed", "8", "--out", str(direct)) == 0
    assert out.read_bytes() == direct.read_bytes()


def test_usage_error_from_argparse_is_exit_2(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "driftlab.cli", "simulate", "--bogus-flag"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 2


def test_report_floats_have_17_significant_digits():
    text = cli.dumps_report({"v": 1.0 / 3.0})
    assert "0.33333333333333331" in text


def test_dumps_report_rejects_non_finite():
    with pytest.raises(ValueError):
        cli.dumps_report({"v": float("nan")})
