"""Budgeted trial execution.

Wraps raw benchmark outcomes into TrialResults: applies the trial-timeout
policy (abort when observed latency exceeds multiplier x latency constraint,
charging only the warmup fraction of the cost), computes total violation,
and maintains the run History shared by the annealing and TPE phases.

Also implements the line-delimited JSON wire protocol used to delegate
evaluation to an out-of-process worker; see docs/wire_protocol.md for a
byte-exact transcript. The policy semantics are identical on both paths, so
every optimizer faces the same evaluation rules regardless of transport.
"""
from __future__ import annotations

import json
import math
import subprocess
from dataclasses import dataclass, field
from typing import Any, Iterator, Mapping, Sequence

from .benchmarks import (
    CRASH,
    OK,
    Benchmark,
    ConstraintSpec,
    HardwareProfile,
    RawOutcome,
    Scenario,
)
from .errors import ProtocolError, SpecificationError, TransportError
from .space import Config

EARLY_STOP = "early_stop"
TRIAL_STATUSES = (OK, CRASH, EARLY_STOP)

PHASE_INIT = "init"
PHASE_SA = "sa"
PHASE_TPE = "tpe"

DEFAULT_WARMUP_FRACTION = 30 / 130


@dataclass(frozen=True)
class TimeoutPolicy:
    """Abort trials whose observed latency exceeds multiplier x c_latency."""

    latency_constraint_ms: float
    multiplier: float = 5.0
    enabled: bool = True

    def __post_init__(self) -> None:
        if not self.multiplier > 1:
            raise SpecificationError("timeout multiplier must exceed 1")

    @property
    def threshold_ms(self) -> float:
        return self.multiplier * self.latency_constraint_ms

    @staticmethod
    def for_scenario(
        scenario: Scenario, multiplier: float = 5.0, enabled: bool = True
    ) -> "TimeoutPolicy":
        latency = scenario.latency_constraint()
        if latency is None:
            return TimeoutPolicy(latency_constraint_ms=1.0, multiplier=multiplier, enabled=False)
        return TimeoutPolicy(
            latency_constraint_ms=latency.threshold, multiplier=multiplier, enabled=enabled
        )


def violation(
    constraint_values: Mapping[str, float], constraints: Sequence[ConstraintSpec]
) -> float:
    """Total violation: sum over constraints of max(0, g_j - c_j)."""
    total = 0.0
    for c in constraints:
        if c.name not in constraint_values:
            raise SpecificationError(f"missing value for constraint {c.name!r}")
        total += max(0.0, constraint_values[c.name] - c.threshold)
    return total


def _violation_observed(
    constraint_values: Mapping[str, float], constraints: Sequence[ConstraintSpec]
) -> float:
    """Violation over the constraints that were actually observed
    (early-stopped trials only record the latency measurement)."""
    return sum(
        max(0.0, constraint_values[c.name] - c.threshold)
        for c in constraints
        if c.name in constraint_values
    )


@dataclass(frozen=True)
class EvalFragment:
    """What an evaluation transport returns: outcome after timeout policy."""

    status: str
    objective: float | None
    constraint_values: dict[str, float] | None
    cost_seconds: float
    crash_reason: str | None = None


@dataclass
class TrialResult:
    config: Config
    status: str
    objective: float | None
    constraint_values: dict[str, float] | None
    violation: float
    feasible: bool
    cost_seconds: float
    phase_tag: str
    trial_index: int
    events: list[dict[str, Any]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.status not in TRIAL_STATUSES:
            raise SpecificationError(f"unknown trial status {self.status!r}")
        if self.feasible and (self.status != OK or self.violation != 0.0):
            raise SpecificationError("feasible requires status=ok and zero violation")
        if self.status == CRASH and self.objective is not None:
            raise SpecificationError("crashed trials carry no objective")
        if self.status == EARLY_STOP and self.feasible:
            raise SpecificationError("early-stopped trials are never feasible")

    def annotate(self, kind: str, **details: Any) -> None:
        self.events.append({"event": kind, **details})

    @property
    def bad(self) -> bool:
        return not self.feasible


class History:
    """Ordered trial ledger with derived counters N_feas and N_bad."""

    def __init__(self, trials: Sequence[TrialResult] = ()):
        self.trials: list[TrialResult] = []
        self.n_feas = 0
        self.n_bad = 0
        self._best: TrialResult | None = None
        for t in trials:
            self.append(t)

    def append(self, trial: TrialResult) -> None:
        if self.trials and trial.trial_index <= self.trials[-1].trial_index:
            raise SpecificationError("trial_index must be strictly increasing")
        self.trials.append(trial)
        if trial.feasible:
            self.n_feas += 1
            if self._best is None or trial.objective > self._best.objective:
                self._best = trial
        else:
            self.n_bad += 1

    @property
    def best_feasible(self) -> TrialResult | None:
        """Feasible trial with maximal objective, earliest index on ties."""
        return self._best

    def feasible_trials(self) -> list[TrialResult]:
        return [t for t in self.trials if t.feasible]

    def __len__(self) -> int:
        return len(self.trials)

    def __iter__(self) -> Iterator[TrialResult]:
        return iter(self.trials)

    def __getitem__(self, i: int) -> TrialResult:
        return self.trials[i]


# ---------------------------------------------------------------------------
# Policy application and trial assembly

def apply_timeout_policy(
    raw: RawOutcome,
    scenario: Scenario,
    policy: TimeoutPolicy,
    warmup_fraction: float = DEFAULT_WARMUP_FRACTION,
) -> EvalFragment:
    if raw.status == CRASH:
        return EvalFragment(CRASH, None, None, raw.true_cost_seconds, raw.crash_reason)
    latency_c = scenario.latency_constraint()
    if policy.enabled and latency_c is not None:
        observed = raw.constraint_values[latency_c.name]
        if observed > policy.threshold_ms:
            return EvalFragment(
                EARLY_STOP,
                None,
                {latency_c.name: observed},
                raw.true_cost_seconds * warmup_fraction,
            )
    return EvalFragment(
        OK, raw.objective, dict(raw.constraint_values), raw.true_cost_seconds
    )


def make_trial(
    config: Config,
    fragment: EvalFragment,
    scenario: Scenario,
    trial_index: int,
    phase_tag: str,
) -> TrialResult:
    if fragment.status == CRASH:
        v = math.inf
    elif fragment.status == EARLY_STOP:
        v = _violation_observed(fragment.constraint_values, scenario.constraints)
    else:
        v = violation(fragment.constraint_values, scenario.constraints)
    return TrialResult(
        config=dict(config),
        status=fragment.status,
        objective=fragment.objective,
        constraint_values=fragment.constraint_values,
        violation=v,
        feasible=fragment.status == OK and v == 0.0,
        cost_seconds=fragment.cost_seconds,
        phase_tag=phase_tag,
        trial_index=trial_index,
    )


def run_trial(
    benchmark: Benchmark,
    config: Config,
    scenario: Scenario,
    hw: HardwareProfile,
    policy: TimeoutPolicy,
    trial_index: int = 1,
    phase_tag: str = PHASE_INIT,
) -> TrialResult:
    """In-process evaluation of one configuration under the timeout policy."""
    raw = benchmark.evaluate(config, scenario, hw)
    fragment = apply_timeout_policy(raw, scenario, policy, benchmark.constants.warmup_fraction)
    return make_trial(config, fragment, scenario, trial_index, phase_tag)


# ---------------------------------------------------------------------------
# Evaluator handles (one per run)

class InProcessEvaluator:
    """Evaluates against a Benchmark object in the current process."""

    def __init__(
        self,
        benchmark: Benchmark,
        scenario: Scenario,
        hw: HardwareProfile,
        policy: TimeoutPolicy | None = None,
    ):
        self.benchmark = benchmark
        self.scenario = scenario
        self.hw = hw
        self.policy = policy if policy is not None else TimeoutPolicy.for_scenario(scenario)

    def run(self, config: Config, trial_index: int, phase_tag: str) -> TrialResult:
        return run_trial(
            self.benchmark, config, self.scenario, self.hw, self.policy, trial_index, phase_tag
        )

    def close(self) -> None:
        pass


# ---------------------------------------------------------------------------
# Wire protocol (one JSON document per line, strict JSON)

def encode_request(
    req_id: int,
    config: Config,
    scenario: Scenario,
    hw: HardwareProfile,
    policy: TimeoutPolicy,
    constants_hash: str,
) -> str:
    doc = {
        "id": req_id,
        "params": dict(config),
        "scenario": scenario.to_wire(),
        "hardware": hw.name,
        "timeout_ms": policy.threshold_ms if policy.enabled else None,
        "constants_hash": constants_hash,
    }
    return json.dumps(doc, separators=(",", ":"))


def decode_request(line: str) -> dict[str, Any]:
    doc = _parse_line(line)
    for key in ("id", "params", "scenario", "hardware", "timeout_ms", "constants_hash"):
        if key not in doc:
            raise ProtocolError(f"request missing field {key!r}")
    return doc


def encode_response(req_id: int, fragment: EvalFragment) -> str:
    doc: dict[str, Any] = {"id": req_id, "status": fragment.status}
    if fragment.objective is not None:
        doc["objective"] = fragment.objective
    if fragment.constraint_values is not None:
        doc["constraint_values"] = fragment.constraint_values
    doc["cost_seconds"] = fragment.cost_seconds
    if fragment.crash_reason is not None:
        doc["crash_reason"] = fragment.crash_reason
    return json.dumps(doc, separators=(",", ":"))


def encode_error_response(req_id: int, message: str) -> str:
    return json.dumps({"id": req_id, "error": message}, separators=(",", ":"))


def decode_response(line: str, expected_id: int) -> EvalFragment:
    doc = _parse_line(line)
    if "error" in doc:
        raise ProtocolError(f"worker error for id {doc.get('id')}: {doc['error']}")
    if doc.get("id") != expected_id:
        raise ProtocolError(f"response id {doc.get('id')} does not match request {expected_id}")
    status = doc.get("status")
    if status not in TRIAL_STATUSES:
        raise ProtocolError(f"unknown status token {status!r}")
    if status == OK and ("objective" not in doc or "constraint_values" not in doc):
        raise ProtocolError("ok response missing objective or constraint values")
    constraint_values = doc.get("constraint_values")
    objective = doc.get("objective")
    # JSON may render float-valued numbers without a decimal point; coerce so
    # external-evaluator logs are byte-identical to in-process logs.
    return EvalFragment(
        status=status,
        objective=None if objective is None else float(objective),
        constraint_values=None
        if constraint_values is None
        else {k: float(v) for k, v in constraint_values.items()},
        cost_seconds=float(doc["cost_seconds"]),
        crash_reason=doc.get("crash_reason"),
    )


def _parse_line(line: str) -> dict[str, Any]:
    try:
        doc = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"malformed line: {exc.msg}", offset=exc.pos) from exc
    if not isinstance(doc, dict):
        raise ProtocolError("line is not a JSON object", offset=0)
    return doc


class ExternalEvaluator:
    """Delegates evaluation to a worker subprocess over stdin/stdout,
    strictly request/response with no pipelining."""

    def __init__(
        self,
        command: Sequence[str],
        scenario: Scenario,
        hw: HardwareProfile,
        policy: TimeoutPolicy,
        constants_hash: str,
    ):
        self.scenario = scenario
        self.hw = hw
        self.policy = policy
        self.constants_hash = constants_hash
        self._next_id = 0
        try:
            self._proc = subprocess.Popen(
                list(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise TransportError(f"cannot launch evaluator {command!r}: {exc}") from exc

    def run(self, config: Config, trial_index: int, phase_tag: str) -> TrialResult:
        fragment = self._exchange(config)
        return make_trial(config, fragment, self.scenario, trial_index, phase_tag)

    def _exchange(self, config: Config) -> EvalFragment:
        req_id = self._next_id
        self._next_id += 1
        line = encode_request(
            req_id, config, self.scenario, self.hw, self.policy, self.constants_hash
        )
        if self._proc.poll() is not None:
            raise TransportError("evaluator process exited")
        try:
            assert self._proc.stdin is not None and self._proc.stdout is not None
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
            reply = self._proc.stdout.readline()
        except (BrokenPipeError, OSError) as exc:
            raise TransportError(f"evaluator transport failed: {exc}") from exc
        if reply == "":
            raise TransportError("evaluator closed its output stream")
        return decode_response(reply, expected_id=req_id)

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                if self._proc.stdin is not None:
                    self._proc.stdin.close()
                self._proc.wait(timeout=10)
            except (OSError, subprocess.TimeoutExpired):
                self._proc.kill()

    def __enter__(self) -> "ExternalEvaluator":
        return self

    def __exit__(self, *exc_info: Any) -> None:
        self.close()
