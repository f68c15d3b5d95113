from __future__ import annotations

import json
import math

import pytest

from crashopt.metrics import metrics_report
from crashopt.optimizers import execute_run
from crashopt.runlog import (
    LoggingEvaluator,
    ReplayError,
    RunLogWriter,
    determinism_hash,
    make_header,
    log_filename,
    replay,
    run_id_for,
)

from conftest import make_evaluator


def _logged_run(bench, tmp_path, optimizer="hybrid", seed=0, budget=20, name=None):
    evaluator = make_evaluator(bench)
    scenario = evaluator.scenario
    run_id = run_id_for(bench.name, scenario.name, optimizer, budget, seed)
    path = tmp_path / (name or log_filename(run_id))
    header = make_header(
        run_id=run_id,
        optimizer=optimizer,
        benchmark=bench.name,
        scenario=scenario,
        hardware="mid",
        seed=seed,
        budget=budget,
        constants_hash=bench.constants.sha256,
        resolved_config={"anneal": {}, "tpe": {}, "timeout": {}},
    )
    with RunLogWriter(path, header) as writer:
        record = execute_run(
            optimizer, bench.name, bench.space, LoggingEvaluator(evaluator, writer),
            scenario, "mid", budget, seed, bench.constants.sha256,
        )
    return path, record


def test_line_count_is_header_plus_trials(branin_bench, tmp_path):
    path, record = _logged_run(branin_bench, tmp_path, budget=25)
    lines = path.read_text().splitlines()
    assert len(lines) == 26
    assert json.loads(lines[0])["kind"] == "header"
    assert all(json.loads(line)["kind"] == "trial" for line in lines[1:])


def test_crashed_trials_are_logged_not_filtered(branin_bench, tmp_path):
    path, record = _logged_run(branin_bench, tmp_path, optimizer="random", budget=40)
    statuses = [json.loads(line)["status"] for line in path.read_text().splitlines()[1:]]
    assert "crash" in statuses
    assert len(statuses) == 40


def test_rerun_same_seed_identical_after_timestamp_strip(branin_bench, tmp_path):
    path_a, _ = _logged_run(branin_bench, tmp_path, seed=5, name="a.jsonl")
    path_b, _ = _logged_run(branin_bench, tmp_path, seed=5, name="b.jsonl")
    assert determinism_hash(path_a) == determinism_hash(path_b)
    # raw bytes differ only in the header timestamp
    lines_a = path_a.read_text().splitlines()
    lines_b = path_b.read_text().splitlines()
    assert lines_a[1:] == lines_b[1:]


def test_different_seed_changes_hash(branin_bench, tmp_path):
    path_a, _ = _logged_run(branin_bench, tmp_path, seed=1, name="a.jsonl")
    path_b, _ = _logged_run(branin_bench, tmp_path, seed=2, name="b.jsonl")
    assert determinism_hash(path_a) != determinism_hash(path_b)


def test_replay_reproduces_live_metrics(branin_bench, tmp_path):
    path, record = _logged_run(branin_bench, tmp_path, budget=22)
    replayed, report = replay(path, f_star=-0.4)
    live = metrics_report(record.history, f_star=-0.4)
    assert replayed.complete
    assert replayed.optimizer == "hybrid"
    assert replayed.handoff_index == record.handoff_index
    assert report.best_objective == live.best_objective
    assert report.wasted == live.wasted
    assert report.regret == live.regret
    assert report.wall_clock_seconds == live.wall_clock_seconds
    assert report.first_feasible == live.first_feasible
    assert len(replayed.history) == len(record.history)
    for a, b in zip(replayed.history, record.history):
        assert a.config == b.config
        assert a.violation == b.violation or (math.isinf(a.violation) and math.isinf(b.violation))


def test_replay_names_corrupt_line(branin_bench, tmp_path):
    path, _ = _logged_run(branin_bench, tmp_path, budget=12)
    lines = path.read_text().splitlines()
    lines[6] = lines[6][:10] + "@@@"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ReplayError, match="line 7"):
        replay(path)


def test_replay_empty_file_missing_header(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    with pytest.raises(ReplayError, match="missing header"):
        replay(path)


def test_replay_truncated_log_flagged_incomplete(branin_bench, tmp_path):
    path, _ = _logged_run(branin_bench, tmp_path, budget=15)
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:8]) + "\n")
    record, _ = replay(path)
    assert not record.complete
    assert len(record.history) == 7


def test_log_is_strict_json(branin_bench, tmp_path):
    # inf violations must not leak into the file (strict JSON consumers)
    path, _ = _logged_run(branin_bench, tmp_path, optimizer="random", budget=30)
    text = path.read_text()
    assert "Infinity" not in text
    for line in text.splitlines():
        json.loads(line)


def test_events_recorded_on_trials(branin_bench, tmp_path):
    path, record = _logged_run(branin_bench, tmp_path, optimizer="sa", budget=30, seed=3)
    docs = [json.loads(line) for line in path.read_text().splitlines()[1:]]
    kinds = {e["event"] for doc in docs for e in doc["events"]}
    assert "proposal" in kinds


def test_tpe_suggestions_log_pool_and_score(branin_bench, tmp_path):
    path, record = _logged_run(branin_bench, tmp_path, optimizer="hybrid", budget=25, seed=1)
    docs = [json.loads(line) for line in path.read_text().splitlines()[1:]]
    suggestions = [
        e for doc in docs if doc["phase"] == "tpe" for e in doc["events"] if e["event"] == "suggestion"
    ]
    assert suggestions, "hybrid run should log TPE suggestion events"
    for event in suggestions:
        assert event["pool"] == 24
        assert event["winning_score"] > 0
