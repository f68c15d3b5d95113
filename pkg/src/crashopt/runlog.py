"""Append-only JSONL run logs and deterministic replay.

One file per run: a header line carrying the fully resolved configuration
and the benchmark-constants hash, then exactly one line per trial in index
order. Lines are flushed as soon as a trial's event annotations are final
(which is before the next trial starts), so an aborted run leaves a usable
partial log. Timestamps are recorded in the header but excluded from the
determinism hash. See docs/jsonl_schema.md for an annotated example.
"""
from __future__ import annotations

import hashlib
import json
import math
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from .benchmarks import Scenario
from .evaluator import History, TrialResult
from .metrics import MetricsReport, metrics_report
from .optimizers import RunRecord

SCHEMA_VERSION = 1


class ReplayError(RuntimeError):
    pass


def trial_to_record(trial: TrialResult) -> dict[str, Any]:
    return {
        "kind": "trial",
        "index": trial.trial_index,
        "phase": trial.phase_tag,
        "params": trial.config,
        "status": trial.status,
        "objective": trial.objective,
        "constraint_values": trial.constraint_values,
        "violation": None if math.isinf(trial.violation) else trial.violation,
        "feasible": trial.feasible,
        "cost_seconds": trial.cost_seconds,
        "events": trial.events,
    }


def trial_from_record(record: dict[str, Any]) -> TrialResult:
    violation = record["violation"]
    return TrialResult(
        config=record["params"],
        status=record["status"],
        objective=record["objective"],
        constraint_values=record["constraint_values"],
        violation=math.inf if violation is None else violation,
        feasible=record["feasible"],
        cost_seconds=record["cost_seconds"],
        phase_tag=record["phase"],
        trial_index=record["index"],
        events=record.get("events", []),
    )


def make_header(
    run_id: str,
    optimizer: str,
    benchmark: str,
    scenario: Scenario,
    hardware: str,
    seed: int,
    budget: int,
    constants_hash: str,
    resolved_config: dict[str, Any],
) -> dict[str, Any]:
    return {
        "kind": "header",
        "schema_version": SCHEMA_VERSION,
        "run_id": run_id,
        "optimizer": optimizer,
        "benchmark": benchmark,
        "scenario": {**scenario.to_wire(), "budget": scenario.budget},
        "hardware": hardware,
        "seed": seed,
        "budget": budget,
        "constants_hash": constants_hash,
        "config": resolved_config,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }


class RunLogWriter:
    """Single-writer JSONL log. Trials are buffered one deep so a trial's
    post-evaluation event annotations land on its own line; the pending
    line is flushed before the next trial begins."""

    def __init__(self, path: str | Path, header: dict[str, Any]):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = self.path.open("w", encoding="utf-8")
        self._pending: TrialResult | None = None
        self._write_line(header)

    def append(self, trial: TrialResult) -> None:
        self.flush_pending()
        self._pending = trial

    def flush_pending(self) -> None:
        if self._pending is not None:
            self._write_line(trial_to_record(self._pending))
            self._pending = None

    def _write_line(self, doc: dict[str, Any]) -> None:
        self._fh.write(json.dumps(doc, separators=(",", ":")))
        self._fh.write("\n")
        self._fh.flush()

    def close(self) -> None:
        self.flush_pending()
        self._fh.close()

    def __enter__(self) -> "RunLogWriter":
        return self

    def __exit__(self, *exc: Any) -> None:
        self.close()


class LoggingEvaluator:
    """Evaluator wrapper that streams each trial into the run log."""

    def __init__(self, inner: Any, writer: RunLogWriter):
        self.inner = inner
        self.writer = writer

    @property
    def scenario(self) -> Scenario:
        return self.inner.scenario

    def run(self, config: dict[str, Any], trial_index: int, phase_tag: str) -> TrialResult:
        trial = self.inner.run(config, trial_index, phase_tag)
        self.writer.append(trial)
        return trial


def read_log(path: str | Path) -> tuple[dict[str, Any], list[dict[str, Any]]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ReplayError(f"{path}: missing header")
    docs = []
    for lineno, line in enumerate(lines, start=1):
        try:
            docs.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise ReplayError(f"{path}: malformed line {lineno}: {exc.msg}") from exc
    header = docs[0]
    if header.get("kind") != "header":
        raise ReplayError(f"{path}: missing header")
    if header.get("schema_version") != SCHEMA_VERSION:
        raise ReplayError(f"{path}: unsupported schema version {header.get('schema_version')}")
    for lineno, doc in enumerate(docs[1:], start=2):
        if doc.get("kind") != "trial":
            raise ReplayError(f"{path}: line {lineno} is not a trial record")
    return header, docs[1:]


def replay(
    path: str | Path, f_star: float | None = None, families: tuple[str, ...] = ()
) -> tuple[RunRecord, MetricsReport]:
    """Reconstruct the RunRecord from a log and recompute its metrics;
    values equal the live run's exactly. Truncated logs come back flagged
    incomplete."""
    header, trial_docs = read_log(path)
    history = History()
    for doc in trial_docs:
        history.append(trial_from_record(doc))
    scenario = Scenario.from_wire(header["scenario"], budget=header["scenario"]["budget"])
    handoff_index = None
    for trial in history:
        if any(e.get("event") == "handoff" for e in trial.events):
            handoff_index = trial.trial_index
    record = RunRecord(
        optimizer=header["optimizer"],
        benchmark=header["benchmark"],
        scenario=scenario,
        hardware=header["hardware"],
        seed=header["seed"],
        budget=header["budget"],
        history=history,
        constants_hash=header["constants_hash"],
        handoff_index=handoff_index,
        complete=len(history) == header["budget"],
    )
    return record, metrics_report(history, f_star=f_star, families=families)


def determinism_hash(path: str | Path) -> str:
    """SHA-256 over the log with the header timestamp removed; stable
    across reruns of the same seed and constants file."""
    header, trial_docs = read_log(path)
    header = dict(header)
    header.pop("timestamp", None)
    digest = hashlib.sha256()
    digest.update(json.dumps(header, sort_keys=True, separators=(",", ":")).encode())
    for doc in trial_docs:
        digest.update(b"\n")
        digest.update(json.dumps(doc, sort_keys=True, separators=(",", ":")).encode())
    return digest.hexdigest()


def run_id_for(benchmark: str, scenario: str, optimizer: str, budget: int, seed: int) -> str:
    return f"{benchmark}__{scenario}__{optimizer}__b{budget}__s{seed}"


def log_filename(run_id: str) -> str:
    return f"{run_id}.jsonl"
