from __future__ import annotations

import numpy as np
import pytest

from crashopt.annealer import AnnealConfig
from crashopt.benchmarks import invalidity_rate
from crashopt.errors import SpecificationError, TransportError
from crashopt.evaluator import PHASE_INIT, PHASE_SA, PHASE_TPE
from crashopt.metrics import metrics_report
from crashopt.optimizers import (
    RngStreams,
    execute_run,
    run_hybrid,
    run_random,
    run_tpe,
)
from crashopt.tpe import TpeConfig

from conftest import AllCrashBench, make_evaluator, rng


def _record(opt, bench, seed, budget=20, scenario=None, profile="mid"):
    evaluator = make_evaluator(bench, scenario, profile)
    scenario_obj = evaluator.scenario
    return execute_run(
        opt, bench.name, bench.space, evaluator, scenario_obj, profile, budget, seed,
        bench.constants.sha256,
    )


def test_budget_exactness_all_optimizers(branin_bench):
    for opt in ("random", "tpe", "sa", "hybrid"):
        record = _record(opt, branin_bench, seed=1, budget=18)
        assert len(record.history) == 18
        assert record.complete
        indices = [t.trial_index for t in record.history]
        assert indices == list(range(1, 19))


def test_fixed_seed_reproducibility(branin_bench):
    for opt in ("random", "tpe", "sa", "hybrid"):
        a = _record(opt, branin_bench, seed=4, budget=16)
        b = _record(opt, branin_bench, seed=4, budget=16)
        assert [t.config for t in a.history] == [t.config for t in b.history]
        assert [t.objective for t in a.history] == [t.objective for t in b.history]
        assert a.handoff_index == b.handoff_index


def test_random_wasted_matches_invalidity(branin_bench, mid_profile):
    rate = invalidity_rate(branin_bench, branin_bench.scenario(), mid_profile, 20_000, rng(9))
    wasted = []
    for seed in range(10):
        record = _record("random", branin_bench, seed=seed, budget=300)
        wasted.append(metrics_report(record.history).final_wasted)
    assert abs(float(np.mean(wasted)) - rate) < 0.05


def test_all_feasible_run_has_zero_waste(quadratic_bench):
    record = _record("random", quadratic_bench, seed=0, budget=10)
    assert metrics_report(record.history).final_wasted == 0.0


def test_tpe_startup_matches_random_given_same_streams(branin_bench):
    streams_a = RngStreams("tpe", branin_bench.name, 3)
    streams_b = RngStreams("tpe", branin_bench.name, 3)
    ev_a = make_evaluator(branin_bench)
    ev_b = make_evaluator(branin_bench)
    tpe_hist = run_tpe(branin_bench.space, ev_a, 6, streams_a, TpeConfig(n_startup=10))
    rand_hist = run_random(branin_bench.space, ev_b, 6, streams_b)
    assert [t.config for t in tpe_hist] == [t.config for t in rand_hist]
    assert all(t.phase_tag == PHASE_INIT for t in tpe_hist)


def test_pure_sa_on_all_crash_benchmark(test_profile):
    bench = AllCrashBench()
    record = _record("sa", bench, seed=0, budget=12)
    assert record.best_feasible is None
    assert metrics_report(record.history).final_wasted == 1.0
    assert record.handoff_index is None


def test_hybrid_handoff_bounded(branin_bench):
    for seed in range(8):
        record = _record("hybrid", branin_bench, seed=seed, budget=30)
        assert record.handoff_index is not None
        assert record.handoff_index <= 15


def test_hybrid_phase_tags_partition(branin_bench):
    for seed in range(5):
        record = _record("hybrid", branin_bench, seed=seed, budget=25)
        for trial in record.history:
            if trial.phase_tag == PHASE_TPE:
                assert record.handoff_index is not None
                assert trial.trial_index > record.handoff_index
            else:
                assert trial.phase_tag in (PHASE_INIT, PHASE_SA)
                if record.handoff_index is not None:
                    assert trial.trial_index <= record.handoff_index


def test_hybrid_budget_shared_between_phases(branin_bench):
    record = _record("hybrid", branin_bench, seed=2, budget=22)
    assert len(record.history) == 22
    if record.handoff_index is not None:
        tpe_trials = [t for t in record.history if t.phase_tag == PHASE_TPE]
        assert len(tpe_trials) == 22 - record.handoff_index


def test_hybrid_small_budget_never_hands_off(branin_bench):
    cfg = AnnealConfig()
    evaluator = make_evaluator(branin_bench)
    history, handoff = run_hybrid(
        branin_bench.space, evaluator, cfg.n_init + 2, RngStreams("hybrid", branin_bench.name, 0)
    )
    assert handoff is None
    assert len(history) == cfg.n_init + 2


def test_unknown_optimizer_rejected(branin_bench):
    evaluator = make_evaluator(branin_bench)
    with pytest.raises(SpecificationError):
        execute_run(
            "gradient-descent", branin_bench.name, branin_bench.space, evaluator,
            evaluator.scenario, "mid", 10, 0, "hash",
        )


def test_transport_abort_preserves_partial_history(branin_bench):
    class Flaky:
        def __init__(self, inner, fail_at):
            self.inner = inner
            self.fail_at = fail_at

        @property
        def scenario(self):
            return self.inner.scenario

        def run(self, config, trial_index, phase_tag):
            if trial_index >= self.fail_at:
                raise TransportError("worker died")
            return self.inner.run(config, trial_index, phase_tag)

    flaky = Flaky(make_evaluator(branin_bench), fail_at=7)
    record = execute_run(
        "random", branin_bench.name, branin_bench.space, flaky,
        flaky.scenario, "mid", 20, 0, branin_bench.constants.sha256,
    )
    assert not record.complete
    assert len(record.history) == 6


def test_streams_are_independent():
    a = RngStreams("hybrid", "crashy_branin", 0)
    b = RngStreams("hybrid", "crashy_branin", 0)
    # consuming one stream never perturbs another
    _ = a.sampling.random(100)
    assert a.proposal.random() == b.proposal.random()
    assert a.tpe.random() == b.tpe.random()


def test_streams_differ_across_optimizers_and_seeds():
    base = RngStreams("random", "crashy_branin", 0).sampling.random()
    assert base != RngStreams("tpe", "crashy_branin", 0).sampling.random()
    assert base != RngStreams("random", "sim_deploy", 0).sampling.random()
    assert base != RngStreams("random", "crashy_branin", 1).sampling.random()
