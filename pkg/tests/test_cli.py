import json
from pathlib import Path

import numpy as np
import pytest

from liftctl.cli import SystemDefinition, main

DEFS = Path(__file__).resolve().parent.parent / "defs"
LINE = str(DEFS / "line_shift.json")
FLAT = str(DEFS / "flat_rotation.json")
SPHERE = str(DEFS / "sphere_rotation.json")


def run_cli(args, capsys):
    code = main(args)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_shipped_definitions_load():
    for path in (LINE, FLAT, SPHERE):
        defn = SystemDefinition.load(path)
        assert defn.system.n_controls >= 1


def test_simulate_sphere_rotation_half_turn(capsys):
    code, out, _ = run_cli([
        "simulate", SPHERE, "--x0", "1,0,0",
        "--control", json.dumps([[np.pi, [1.0]]]),
    ], capsys)
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "t,x1,x2,x3"
    final = np.array([float(p) for p in lines[-1].split(",")])
    assert final[0] == pytest.approx(np.pi)
    assert np.linalg.norm(final[1:] - np.array([-1.0, 0.0, 0.0])) <= 1e-7


def test_simulate_time_zero_single_row(capsys):
    code, out, _ = run_cli(["simulate", FLAT, "--x0", "1,0"], capsys)
    assert code == 0
    lines = out.strip().splitlines()
    assert len(lines) == 2  # header + initial state


def test_simulate_lifted_outputs_fiber_columns(capsys):
    code, out, _ = run_cli([
        "simulate", FLAT, "--x0", "1,0", "--lifted", "0,1",
        "--control", json.dumps([[0.5, [0.3]]]), "--format", "json",
    ], capsys)
    assert code == 0
    payload = json.loads(out)
    assert payload["fibers"] is not None


def test_simulate_malformed_definition(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({
        "schema_version": 1,
        "manifold": {"kind": "flat", "dim": 2},
        "controlled": [],
        "bounds": [],
    }))
    code, _, err = run_cli(["simulate", str(bad), "--x0", "0,0"], capsys)
    assert code == 2
    assert "controlled" in err


def test_simulate_wrong_schema_version(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"schema_version": 99}))
    code, _, err = run_cli(["simulate", str(bad), "--x0", "0,0"], capsys)
    assert code == 2
    assert "schema_version" in err


@pytest.mark.parametrize("definition", [LINE, FLAT, SPHERE])
@pytest.mark.parametrize("suite", ["lift", "flow", "invariance", "rank"])
def test_check_suites_pass_on_shipped_defs(definition, suite, capsys):
    code, out, _ = run_cli(["check", definition, "--suite", suite], capsys)
    report = json.loads(out)
    assert report["passed"], report
    assert code == 0


def test_check_unknown_suite(capsys):
    code, _, err = run_cli(["check", FLAT, "--suite", "nonsense"], capsys)
    assert code == 2
    assert "suite" in err


def test_chain_line_shift(tmp_path, capsys):
    out_file = tmp_path / "chain.json"
    code, _, _ = run_cli([
        "chain", LINE, "--source", "0;0", "--target", "0;1",
        "--eps", "0.25", "--T", "0.5", "--out", str(out_file),
    ], capsys)
    assert code == 0
    payload = json.loads(out_file.read_text())
    assert payload["verification"]["passed"]
    assert len(payload["chain"]["legs"]) >= 4


def test_chain_source_equals_target(capsys):
    code, out, _ = run_cli([
        "chain", LINE, "--source", "0;0.5", "--target", "0;0.5",
        "--eps", "0.25", "--T", "0.5",
    ], capsys)
    assert code == 0
    payload = json.loads(out)
    assert payload["verification"]["passed"]
    assert len(payload["chain"]["legs"]) == 1


def test_chain_verify_only_detects_corruption(tmp_path, capsys):
    out_file = tmp_path / "chain.json"
    code, _, _ = run_cli([
        "chain", LINE, "--source", "0;0", "--target", "0;1",
        "--eps", "0.25", "--T", "0.5", "--out", str(out_file),
    ], capsys)
    assert code == 0
    payload = json.loads(out_file.read_text())
    chain = payload["chain"]
    chain["legs"][0]["jump_target"]["v"][0] += 2 * chain["epsilon"]
    corrupted = tmp_path / "corrupted.json"
    corrupted.write_text(json.dumps(chain))
    code, out, _ = run_cli(["chain", LINE, "--verify-only", str(corrupted)], capsys)
    assert code == 1
    report = json.loads(out)
    assert not report["passed"]
    assert any("leg 0" in msg for msg in report["messages"])


def test_chain_missing_source(capsys):
    code, _, err = run_cli(["chain", LINE, "--eps", "0.25", "--T", "0.5"], capsys)
    assert code == 2
    assert "--source" in err


def test_larc_reports(capsys):
    code, out, _ = run_cli(["larc", FLAT, "--point", "1,1"], capsys)
    assert code == 0
    report = json.loads(out)
    assert report["rank"] == 2
    assert report["lifted"] is False

    code, out, _ = run_cli(["larc", FLAT, "--point", "1,1", "--v", "0,1"], capsys)
    report = json.loads(out)
    assert report["lifted"] is True
    assert report["rank"] <= 2


def test_outputs_deterministic(capsys):
    args = ["larc", SPHERE, "--point", "1,0,0", "--v", "0,1,0"]
    _, out1, _ = run_cli(args, capsys)
    _, out2, _ = run_cli(args, capsys)
    assert out1 == out2
    args = ["check", LINE, "--suite", "rank"]
    _, out1, _ = run_cli(args, capsys)
    _, out2, _ = run_cli(args, capsys)
    assert out1 == out2


def test_seed_env_override(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("LIFTCTL_SEED", "123")
    defn = SystemDefinition.load(LINE)
    assert defn.seed == 123
    monkeypatch.delenv("LIFTCTL_SEED")
    assert SystemDefinition.load(LINE).seed == 7


def test_usage_error_exit_code(capsys):
    assert main(["simulate"]) == 2  # missing required arguments
    assert main(["unknown-command"]) == 2
