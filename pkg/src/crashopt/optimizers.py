"""The four search strategies behind one interface: uniform random,
cold-start constrained TPE, pure feasible-first annealing, and the
anneal-then-TPE hybrid.

Seed discipline: the master entropy for a run is (seed, H(optimizer),
H(benchmark)) where H is the first four bytes of SHA-256 over the name.
Each component draws from its own named sub-stream (sampling, proposal,
acceptance, tpe) derived by appending a fixed stream index, so extra draws
in one component never perturb another and runs are comparable seed by
seed across optimizers.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Any

import numpy as np

from .annealer import AnnealConfig, run_tba
from .benchmarks import Scenario
from .errors import SpecificationError, TransportError
from .evaluator import History, PHASE_INIT, PHASE_TPE
from .space import Config, SearchSpace, sample_uniform
from .tpe import Study, TpeConfig, suggest, warm_start

OPTIMIZER_NAMES = ("random", "tpe", "sa", "hybrid")

_STREAM_IDS = {"sampling": 0, "proposal": 1, "acceptance": 2, "tpe": 3}


def _stable_hash32(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:4], "big")


class RngStreams:
    """Named, independent generators for one (optimizer, benchmark, seed)."""

    def __init__(self, optimizer: str, benchmark: str, seed: int):
        base = (int(seed), _stable_hash32(optimizer), _stable_hash32(benchmark))
        self.sampling = self._make(base, "sampling")
        self.proposal = self._make(base, "proposal")
        self.acceptance = self._make(base, "acceptance")
        self.tpe = self._make(base, "tpe")

    @staticmethod
    def _make(base: tuple[int, ...], name: str) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([*base, _STREAM_IDS[name]]))


@dataclass
class RunRecord:
    optimizer: str
    benchmark: str
    scenario: Scenario
    hardware: str
    seed: int
    budget: int
    history: History
    constants_hash: str
    handoff_index: int | None = None
    complete: bool = True

    @property
    def best_feasible(self) -> tuple[Config, float] | None:
        best = self.history.best_feasible
        return None if best is None else (best.config, best.objective)


def run_random(space: SearchSpace, evaluator: Any, budget: int, streams: RngStreams) -> History:
    """Budget-many independent uniform trials."""
    if budget < 1:
        raise SpecificationError("budget must be >= 1")
    history = History()
    for i in range(1, budget + 1):
        config = sample_uniform(space, streams.sampling)
        history.append(evaluator.run(config, i, PHASE_INIT))
    return history


def run_tpe(
    space: SearchSpace,
    evaluator: Any,
    budget: int,
    streams: RngStreams,
    tpe_cfg: TpeConfig | None = None,
) -> History:
    """Cold-start constrained TPE: n_startup uniform trials, then
    model-guided suggestions to the budget."""
    if budget < 1:
        raise SpecificationError("budget must be >= 1")
    study = Study(space, tpe_cfg)
    history = History()
    for i in range(1, budget + 1):
        guided = study.model_guided
        config = suggest(study, streams.tpe if guided else streams.sampling)
        trial = evaluator.run(config, i, PHASE_TPE if guided else PHASE_INIT)
        if study.last_suggestion is not None:
            trial.annotate("suggestion", **study.last_suggestion)
        history.append(trial)
        study.add(trial)
    return history


def run_tba_pure(
    space: SearchSpace,
    evaluator: Any,
    budget: int,
    streams: RngStreams,
    anneal_cfg: AnnealConfig | None = None,
) -> History:
    """Feasible-first annealing for the whole budget (no TPE handoff)."""
    cfg = anneal_cfg if anneal_cfg is not None else AnnealConfig()
    return run_tba(space, evaluator, cfg, budget, streams, stop_at_handoff=False)


def run_hybrid(
    space: SearchSpace,
    evaluator: Any,
    budget: int,
    streams: RngStreams,
    anneal_cfg: AnnealConfig | None = None,
    tpe_cfg: TpeConfig | None = None,
) -> tuple[History, int | None]:
    """Algorithm end to end: annealing until the adaptive handoff, then
    TPE warm-started with the full Phase-1 history over the unrestricted
    space (no blacklist masking in Phase 2)."""
    cfg = anneal_cfg if anneal_cfg is not None else AnnealConfig()
    history = run_tba(space, evaluator, cfg, budget, streams, stop_at_handoff=True)
    if len(history) >= budget:
        return history, None
    handoff_index = len(history)
    study = Study(space, tpe_cfg)
    warm_start(study, history)
    for i in range(handoff_index + 1, budget + 1):
        config = suggest(study, streams.tpe)
        trial = evaluator.run(config, i, PHASE_TPE)
        if study.last_suggestion is not None:
            trial.annotate("suggestion", **study.last_suggestion)
        history.append(trial)
        study.add(trial)
    return history, handoff_index


class _RecordingEvaluator:
    """Pass-through that remembers every evaluated trial, so transport
    aborts can still hand back the partial history."""

    def __init__(self, inner: Any):
        self.inner = inner
        self.seen: list[Any] = []

    @property
    def scenario(self) -> Scenario:
        return self.inner.scenario

    def run(self, config: Config, trial_index: int, phase_tag: str) -> Any:
        trial = self.inner.run(config, trial_index, phase_tag)
        self.seen.append(trial)
        return trial


def execute_run(
    optimizer: str,
    benchmark_name: str,
    space: SearchSpace,
    evaluator: Any,
    scenario: Scenario,
    hardware_name: str,
    budget: int,
    seed: int,
    constants_hash: str,
    anneal_cfg: AnnealConfig | None = None,
    tpe_cfg: TpeConfig | None = None,
) -> RunRecord:
    """Run one (optimizer, seed) pair and collect the RunRecord. Transport
    failures preserve the partial history and mark the record incomplete."""
    if optimizer not in OPTIMIZER_NAMES:
        raise SpecificationError(f"unknown optimizer {optimizer!r} (known: {OPTIMIZER_NAMES})")
    streams = RngStreams(optimizer, benchmark_name, seed)
    recorder = _RecordingEvaluator(evaluator)
    handoff_index: int | None = None
    complete = True
    try:
        if optimizer == "random":
            history = run_random(space, recorder, budget, streams)
        elif optimizer == "tpe":
            history = run_tpe(space, recorder, budget, streams, tpe_cfg)
        elif optimizer == "sa":
            history = run_tba_pure(space, recorder, budget, streams, anneal_cfg)
        else:
            history, handoff_index = run_hybrid(
                space, recorder, budget, streams, anneal_cfg, tpe_cfg
            )
    except TransportError:
        complete = False
        history = History(recorder.seen)
    return RunRecord(
        optimizer=optimizer,
        benchmark=benchmark_name,
        scenario=scenario,
        hardware=hardware_name,
        seed=seed,
        budget=budget,
        history=history,
        constants_hash=constants_hash,
        handoff_index=handoff_index,
        complete=complete and len(history) == budget,
    )
