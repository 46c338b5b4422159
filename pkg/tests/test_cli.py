import json

import pytest
from click.testing import CliRunner

from flowforge.cli import main
from flowforge.dataset import DESK_PATH


@pytest.fixture
def runner():
    return CliRunner()


def test_run_then_report_eval_replay(runner, tmp_path):
    out = tmp_path / "runs"
    r = runner.invoke(main, ["run", "--mode", "es", "--instance", "data_sum_list", "--instance", "string_pad",
                             "--out", str(out), "--no-figures"])
    assert r.exit_code == 0, r.output
    assert "2/2 cases passed" in r.output
    run_dir = out / "es-pe-react"

    r = runner.invoke(main, ["report", str(run_dir), "--format", "csv"])
    assert r.exit_code == 0 and r.output.startswith("config_hash,coverage,Mode,")

    r = runner.invoke(main, ["eval", str(run_dir)])
    assert r.exit_code == 0 and r.output.count("\tok") == 2

    r = runner.invoke(main, ["replay", str(run_dir / "data_sum_list" / "build.trace.jsonl")])
    assert r.exit_code == 0 and "finish" in r.output


def test_eval_flags_drift(runner, tmp_path):
    out = tmp_path / "runs"
    runner.invoke(main, ["run", "--mode", "react", "--instance", "string_pad", "--out", str(out), "--no-figures"])
    case = out / "react" / "string_pad" / "case.json"
    doc = json.loads(case.read_text())
    doc["verdicts"] = ["fail"] * len(doc["verdicts"])
    case.write_text(json.dumps(doc))
    r = runner.invoke(main, ["eval", str(out / "react")])
    assert r.exit_code == 1 and "CHANGED" in r.output


def test_compare_golden_with_itself(runner):
    path = str(DESK_PATH / "math_hypotenuse.json")
    r = runner.invoke(main, ["compare", path, path])
    assert r.exit_code == 0
    assert json.loads(r.output)["equivalence"] == "Equivalent"


def test_exit_codes(runner, tmp_path):
    assert runner.invoke(main, ["report", str(tmp_path)]).exit_code == 2
    assert runner.invoke(main, ["run", "--instance", "nope", "--out", str(tmp_path)]).exit_code == 2
    assert runner.invoke(main, ["run", "--rollouts", "0", "--out", str(tmp_path)]).exit_code == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    assert runner.invoke(main, ["compare", str(bad), str(bad)]).exit_code == 2
    assert runner.invoke(main, ["replay", str(bad)]).exit_code == 2


def test_matrix_writes_figures(runner, tmp_path):
    out = tmp_path / "runs"
    r = runner.invoke(main, ["run", "--mode", "matrix", "--out", str(out)])
    assert r.exit_code == 0, r.output
    assert {p.name for p in (out / "figures").iterdir()} == {"metrics.png", "failures.png", "tokens.png"}
    assert "ES-ReAct" in (out / "report.md").read_text()
