"""Crash-aware constrained black-box optimization toolkit.

Search in hierarchical mixed-variable spaces where many configurations
crash or violate hard constraints: feasible-first simulated annealing with
subspace blacklisting and trial timeouts, warm-started constraint-aware
TPE, synthetic crash-heavy benchmarks, metrics, JSONL logging with
deterministic replay, and a CLI experiment harness.
"""
from .annealer import AnnealConfig, run_tba
from .benchmarks import (
    BENCHMARK_NAMES,
    Benchmark,
    ConstraintSpec,
    GlobalOptimum,
    HardwareProfile,
    RawOutcome,
    Scenario,
    default_constants,
    evaluate_crashy_branin,
    evaluate_hier_rosenbrock,
    evaluate_sim_deploy,
    get_benchmark,
    global_optimum,
    invalidity_rate,
    load_constants,
)
from .errors import ProtocolError, SpecificationError, TransportError
from .evaluator import (
    ExternalEvaluator,
    History,
    InProcessEvaluator,
    TimeoutPolicy,
    TrialResult,
    run_trial,
    violation,
)
from .metrics import (
    MetricsReport,
    discovery,
    discovery_probability,
    first_feasible_index,
    metrics_report,
    simple_regret,
    wall_clock,
    wasted_fraction,
)
from .optimizers import (
    OPTIMIZER_NAMES,
    RngStreams,
    RunRecord,
    execute_run,
    run_hybrid,
    run_random,
    run_tba_pure,
    run_tpe,
)
from .runlog import determinism_hash, replay
from .space import (
    Configuration,
    SearchSpace,
    VariableSpec,
    active_set,
    crashy_branin_space,
    deployment_space,
    hier_rosenbrock_space,
    load_space,
    sample_uniform,
    validate,
)
from .tpe import Study, TpeConfig, feasibility_prob, score_candidate, split_good_bad, suggest, warm_start

__version__ = "0.1.0"
