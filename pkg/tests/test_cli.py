from __future__ import annotations

import json

import pytest

from decision_memory import cli
from decision_memory.errors import ConfigError, EmptyInput
from decision_memory.llm.backends import Fallback, ScriptedBackend


def _pipeline(tmp_path, *extra: str) -> list[str]:
    return ["--output-dir", str(tmp_path), "--seed", "4", *extra]


def test_flags_override_file_override_defaults(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"seed": 9, "noise": 0.5, "formation": {"batch_size": 7}}))
    config = cli.load_config(str(path), {"seed": 3, "batch_size": None})
    assert (config.seed, config.noise, config.formation_config().batch_size) == (3, 0.5, 7)
    assert config.eval_goal_count == 50
    flagged = cli.load_config(str(path), {"batch_size": 11})
    assert flagged.formation_config().batch_size == 11


@pytest.mark.parametrize("data", [{"colour": 1}, {"environment": "mars"}, {"noise": 2.0}, {"rounds": 0},
                                  {"backend": "http"}, {"explorer": {"top_n": 0}}, [1, 2]])
def test_bad_configs_raise(tmp_path, data):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(data))
    with pytest.raises(ConfigError):
        cli.load_config(str(path), {})


def test_exit_codes(tmp_path, capsys):
    assert cli.main(["launch"]) == 2
    assert cli.main(["ingest", "--config", str(tmp_path / "missing.json")]) == 2
    assert cli.main(["form-memory", *_pipeline(tmp_path)]) == 2
    (tmp_path / "trajectories.jsonl").write_text("{not json\n")
    assert cli.main(["form-memory", *_pipeline(tmp_path)]) == 1
    assert "error" in capsys.readouterr().err


def test_ingest_is_byte_deterministic(tmp_path):
    for name in ("a", "b"):
        for family in ("toyhouse", "toyshop"):
            args = ["ingest", "--environment", family, "--count", "12", *_pipeline(tmp_path / name / family)]
            assert cli.main(args) == 0
    for family in ("toyhouse", "toyshop"):
        for leaf in ("trajectories.jsonl", "trajectories.meta.json"):
            assert (tmp_path / "a" / family / leaf).read_bytes() == (tmp_path / "b" / family / leaf).read_bytes()
    catalog = json.loads((tmp_path / "a" / "toyshop" / "catalog.json").read_text())
    assert catalog["seed"] == 4


def test_pipeline_writes_artifacts(tmp_path, capsys):
    assert cli.main(["ingest", "--count", "20", *_pipeline(tmp_path)]) == 0
    assert cli.main(["form-memory", "--batch-size", "10", *_pipeline(tmp_path)]) == 0
    assert "batch 2:" in capsys.readouterr().out
    assert cli.main(["refine", "--goal-count", "2", *_pipeline(tmp_path)]) == 0
    report = json.loads((tmp_path / "refine_report.json").read_text())
    assert report["seed"] == 4 and len(report["records"]) == 4
    assert cli.main(["run", "--goal", "put some apple in fridge", *_pipeline(tmp_path)]) == 0
    trace = json.loads((tmp_path / "run_trace.json").read_text())
    assert len(trace["candidates"]) == 2
    assert cli.main(["eval", "--goal-count", "4", *_pipeline(tmp_path)]) == 0
    evaluation = json.loads((tmp_path / "eval_report.json").read_text())
    assert evaluation["goals"] == 4 and evaluation["batches"] == 2
    assert (tmp_path / "eval_report.txt").read_text().startswith("seed: 4\n| Method")


def test_second_refine_round_adds_nothing_new(tmp_path):
    cli.main(["ingest", "--environment", "toyshop", "--count", "20", *_pipeline(tmp_path)])
    cli.main(["form-memory", "--environment", "toyshop", "--batch-size", "20", *_pipeline(tmp_path)])
    config = cli.load_config(None, {"environment": "toyshop", "output_dir": str(tmp_path), "seed": 4,
                                    "rounds": 2, "refine_goal_count": 4})
    report = cli.cmd_refine(config, ScriptedBackend((), Fallback.RULE_BASED))
    second = [r["tuples_added"] for r in report["records"] if r["round"] == 2]
    first = [r["tuples_added"] for r in report["records"] if r["round"] == 1]
    assert sum(first) + sum(second) == report["tuples_added"]
    assert sum(second) <= sum(first)


def test_score_and_success_rate():
    assert cli.score_and_sr([1.0, 0.5, 1.0, 0.75]) == (81.25, 50.0)
    assert cli.score_and_sr([None, 1.0]) == (50.0, 50.0)
    with pytest.raises(EmptyInput):
        cli.score_and_sr([])


def test_table_format():
    assert cli.format_table("Memory agent", [1.0, 0.5]) == (
        "| Method       | Score | SR    |\n|--------------|-------|-------|\n| Memory agent | 75.00 | 50.00 |\n")
    house = cli.format_table("m", [1.0, 0.0], ["Pick", "Cool"]).splitlines()
    assert house[0].split("|")[1:-1] == [" Method ", " Score ", " SR    ", " Pick   ", " Clean ", " Heat ",
                                        " Cool ", " Look ", " Pick2 ", " All   "]
    assert house[2].split("|")[4:7] == [" 100.00 ", " -     ", " -    "]


def test_eval_rejects_empty_goal_file(tmp_path):
    cli.main(["ingest", "--count", "5", *_pipeline(tmp_path)])
    cli.main(["form-memory", *_pipeline(tmp_path)])
    goals = tmp_path / "goals.txt"
    goals.write_text("\n")
    config = cli.load_config(None, {"output_dir": str(tmp_path), "goals": str(goals)})
    with pytest.raises(EmptyInput):
        cli.cmd_eval(config, ScriptedBackend((), Fallback.RULE_BASED))


def test_read_goals_accepts_jsonl_and_plain_lines(tmp_path):
    path = tmp_path / "goals.txt"
    path.write_text('{"goal": "put some apple in fridge", "seed": 7}\nheat some egg and put it in countertop\n\n')
    assert cli.read_goals(str(path)) == [cli.GoalSpec("put some apple in fridge", 7),
                                         cli.GoalSpec("heat some egg and put it in countertop", 0)]


def test_workers_do_not_change_evaluation(tmp_path):
    cli.main(["ingest", "--count", "10", *_pipeline(tmp_path)])
    cli.main(["form-memory", "--batch-size", "5", *_pipeline(tmp_path)])
    backend = ScriptedBackend((), Fallback.RULE_BASED)
    serial = cli.cmd_eval(cli.load_config(None, {"output_dir": str(tmp_path), "eval_goal_count": 6}), backend)
    parallel = cli.cmd_eval(cli.load_config(None, {"output_dir": str(tmp_path), "eval_goal_count": 6, "workers": 3}),
                            backend)
    assert serial == parallel
