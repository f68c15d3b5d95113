from __future__ import annotations

import math

import pytest

from crashopt.benchmarks import ConstraintSpec, OK, Scenario
from crashopt.errors import ProtocolError, SpecificationError
from crashopt.evaluator import (
    CRASH,
    EARLY_STOP,
    EvalFragment,
    History,
    TimeoutPolicy,
    TrialResult,
    decode_request,
    decode_response,
    encode_error_response,
    encode_request,
    encode_response,
    make_trial,
    run_trial,
    violation,
)

from conftest import rng
from crashopt.space import sample_uniform

EDGE = Scenario(
    "edge",
    (ConstraintSpec("latency_p95", 20.0), ConstraintSpec("memory_mb", 512.0)),
    "maximize-accuracy",
)


def _trial(latency, memory=100.0, objective=0.75, policy=None):
    policy = policy or TimeoutPolicy(latency_constraint_ms=20.0)
    from crashopt.benchmarks import RawOutcome
    from crashopt.evaluator import apply_timeout_policy

    raw = RawOutcome(OK, objective, {"latency_p95": latency, "memory_mb": memory}, 13.0)
    fragment = apply_timeout_policy(raw, EDGE, policy, warmup_fraction=30 / 130)
    return make_trial({"x": 1}, fragment, EDGE, trial_index=1, phase_tag="init")


def test_violation_single_overage():
    g = {"latency_p95": 25.0, "memory_mb": 400.0}
    assert violation(g, EDGE.constraints) == 5.0


def test_violation_zero_when_within_bounds():
    g = {"latency_p95": 20.0, "memory_mb": 512.0}
    assert violation(g, EDGE.constraints) == 0.0


def test_violation_sums_over_constraints():
    g = {"latency_p95": 25.0, "memory_mb": 600.0}
    assert violation(g, EDGE.constraints) == pytest.approx(93.0)


def test_violation_missing_value_raises():
    with pytest.raises(SpecificationError):
        violation({"latency_p95": 10.0}, EDGE.constraints)


def test_catastrophic_latency_early_stops():
    trial = _trial(latency=500.0)
    assert trial.status == EARLY_STOP
    assert trial.objective is None
    assert not trial.feasible
    assert trial.cost_seconds == pytest.approx(13.0 * 30 / 130)
    # violation from the single observed latency only
    assert trial.violation == pytest.approx(480.0)


def test_borderline_latency_runs_to_completion():
    trial = _trial(latency=21.0)
    assert trial.status == OK
    assert trial.violation == pytest.approx(1.0)
    assert not trial.feasible


def test_feasible_trial():
    trial = _trial(latency=15.0)
    assert trial.status == OK and trial.feasible and trial.violation == 0.0
    assert trial.cost_seconds == 13.0


def test_early_stop_boundary_is_strict():
    # exactly 5x the constraint still completes; just above aborts
    assert _trial(latency=100.0).status == OK
    assert _trial(latency=100.0 + 1e-9).status == EARLY_STOP


def test_disabled_policy_never_early_stops():
    policy = TimeoutPolicy(latency_constraint_ms=20.0, enabled=False)
    trial = _trial(latency=5000.0, policy=policy)
    assert trial.status == OK
    assert trial.objective == 0.75


def test_multiplier_must_exceed_one():
    with pytest.raises(SpecificationError):
        TimeoutPolicy(latency_constraint_ms=20.0, multiplier=1.0)


def test_crash_trials_carry_inf_violation():
    fragment = EvalFragment(CRASH, None, None, 2.0, crash_reason="boom")
    trial = make_trial({"x": 1}, fragment, EDGE, 1, "init")
    assert math.isinf(trial.violation)
    assert trial.bad


def test_run_trial_on_benchmark(branin_bench, mid_profile):
    scenario = branin_bench.scenario()
    policy = TimeoutPolicy.for_scenario(scenario)
    config = {"mode": "A", "resolution": 1, "x1": 3.0, "x2": 2.0}
    trial = run_trial(branin_bench, config, scenario, mid_profile, policy)
    assert trial.status == OK and trial.feasible


def test_history_counters_and_best(branin_bench, mid_profile):
    scenario = branin_bench.scenario()
    policy = TimeoutPolicy.for_scenario(scenario)
    history = History()
    r = rng(21)
    for i in range(1, 101):
        config = sample_uniform(branin_bench.space, r)
        history.append(run_trial(branin_bench, config, scenario, mid_profile, policy, i))
    assert history.n_feas + history.n_bad == len(history)
    assert history.n_feas == sum(1 for t in history if t.feasible)
    best = history.best_feasible
    if best is not None:
        top = max(t.objective for t in history if t.feasible)
        assert best.objective == top
        first = next(t for t in history if t.feasible and t.objective == top)
        assert best.trial_index == first.trial_index


def test_history_monotone_cost(branin_bench, mid_profile):
    scenario = branin_bench.scenario()
    policy = TimeoutPolicy.for_scenario(scenario)
    history = History()
    r = rng(22)
    total = 0.0
    for i in range(1, 51):
        config = sample_uniform(branin_bench.space, r)
        trial = run_trial(branin_bench, config, scenario, mid_profile, policy, i)
        history.append(trial)
        assert trial.cost_seconds > 0
        total += trial.cost_seconds
    assert total == pytest.approx(sum(t.cost_seconds for t in history))


def test_history_rejects_unordered_indices():
    history = History()
    t = TrialResult({"x": 1}, OK, 0.5, {"latency_p95": 1.0, "memory_mb": 1.0}, 0.0, True, 1.0, "init", 3)
    history.append(t)
    with pytest.raises(SpecificationError):
        history.append(
            TrialResult({"x": 1}, OK, 0.5, {"latency_p95": 1.0, "memory_mb": 1.0}, 0.0, True, 1.0, "init", 3)
        )


def test_trialresult_invariants():
    with pytest.raises(SpecificationError):
        TrialResult({"x": 1}, CRASH, 1.0, None, math.inf, False, 1.0, "init", 1)
    with pytest.raises(SpecificationError):
        TrialResult({"x": 1}, OK, 1.0, {}, 2.0, True, 1.0, "init", 1)


# ---------------------------------------------------------------------------
# Wire protocol

def _policy():
    return TimeoutPolicy(latency_constraint_ms=20.0)


def test_request_roundtrip(mid_profile):
    config = {"model_name": "vit_tiny", "batch_size": 8, "num_threads": 3, "x": 1.25}
    line = encode_request(7, config, EDGE, mid_profile, _policy(), "abc123")
    doc = decode_request(line)
    assert doc["id"] == 7
    assert doc["params"] == config
    assert doc["timeout_ms"] == 100.0
    assert doc["constants_hash"] == "abc123"
    assert doc["scenario"]["constraints"][0] == {"name": "latency_p95", "threshold": 20.0}


def test_response_roundtrip_preserves_all_value_kinds():
    fragment = EvalFragment(
        OK,
        objective=0.7659999999999999,
        constraint_values={"latency_p95": 19.000000000000004, "memory_mb": 512.0},
        cost_seconds=6.123456789012345,
    )
    line = encode_response(3, fragment)
    back = decode_response(line, expected_id=3)
    assert back == fragment


def test_response_roundtrip_early_stop_and_crash():
    early = EvalFragment(EARLY_STOP, None, {"latency_p95": 501.0}, 1.5)
    assert decode_response(encode_response(1, early), 1) == early
    crash = EvalFragment(CRASH, None, None, 2.0, crash_reason="oom")
    assert decode_response(encode_response(2, crash), 2) == crash


def test_unknown_status_token_rejected():
    with pytest.raises(ProtocolError):
        decode_response('{"id":1,"status":"exploded","cost_seconds":1.0}', 1)


def test_id_mismatch_rejected():
    line = encode_response(5, EvalFragment(CRASH, None, None, 1.0))
    with pytest.raises(ProtocolError):
        decode_response(line, expected_id=6)


def test_malformed_line_reports_byte_offset():
    with pytest.raises(ProtocolError) as excinfo:
        decode_response('{"id":1, "status" oops', 1)
    assert excinfo.value.offset is not None
    assert "byte offset" in str(excinfo.value)


def test_error_response_raises_protocol_error():
    with pytest.raises(ProtocolError, match="worker error"):
        decode_response(encode_error_response(-1, "unparseable request"), 4)


def test_encoded_lines_are_single_line(mid_profile):
    line = encode_request(1, {"a": 1}, EDGE, mid_profile, _policy(), "h")
    assert "\n" not in line
