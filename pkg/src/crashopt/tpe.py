"""Constraint-aware Tree-structured Parzen Estimator for hierarchical spaces.

History splits into a good set (top feasible quantile by objective) and a
bad set (everything else, including crashes and early stops). Candidates are
drawn from the good-set density variable by variable in declaration order,
so conditionals are sampled only when their structural parents activate
them, and scored by density ratio times an estimated feasibility
probability. Warm-starting injects a complete Phase-1 history, bypassing
the random startup phase.

Density model, per variable and per set: numeric variables (integers and
ordered categoricals work in index space) get an equally weighted mixture
of Gaussian kernels with per-observation width max(range/20, nearest
neighbor distance) plus one uniform pseudo-component, the numeric analogue
of the pseudocount-1 smoothing applied to unordered categoricals; without
it, a warm start whose few feasible points sit in one small region would
collapse candidate generation onto that region permanently. A variable
with no active observation in a set falls back to its uniform density. The
feasibility estimate is a two-class posterior with Laplace-smoothed priors
and per-variable densities floored at uniform, so it stays informative
when one class is empty.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Any, Sequence

import numpy as np

from .benchmarks import OK
from .errors import SpecificationError
from .evaluator import History, TrialResult
from .space import (
    CATEGORICAL,
    INTEGER,
    Config,
    SearchSpace,
    VariableSpec,
    require_valid,
    sample_uniform,
    validate,
)

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class TpeConfig:
    gamma_quantile: float = 0.25
    n_candidates: int = 24
    n_startup: int = 10
    bandwidth_rule: str = "range-floor-nearest-neighbor"
    categorical_smoothing: float = 1.0

    def __post_init__(self) -> None:
        if not 0 < self.gamma_quantile < 1:
            raise SpecificationError("gamma_quantile must be in (0, 1)")
        if self.n_candidates < 1:
            raise SpecificationError("n_candidates must be >= 1")
        if self.bandwidth_rule != "range-floor-nearest-neighbor":
            raise SpecificationError(f"unknown bandwidth rule {self.bandwidth_rule!r}")

    def to_dict(self) -> dict[str, Any]:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}

    @staticmethod
    def from_dict(doc: dict[str, Any]) -> "TpeConfig":
        return replace(TpeConfig(), **doc)


class Study:
    """Trial store owned by one run: injected Phase-1 trials plus the
    sampler's own evaluated suggestions."""

    def __init__(self, space: SearchSpace, cfg: TpeConfig | None = None):
        self.space = space
        self.cfg = cfg if cfg is not None else TpeConfig()
        self.trials: list[TrialResult] = []
        self.recorded_objectives: list[float] = []
        self.injected = 0
        self.last_suggestion: dict[str, Any] | None = None

    def __len__(self) -> int:
        return len(self.trials)

    @property
    def model_guided(self) -> bool:
        return self.injected > 0 or len(self.trials) >= self.cfg.n_startup

    def add(self, trial: TrialResult, recorded_objective: float | None = None) -> None:
        self.trials.append(trial)
        if recorded_objective is None:
            recorded_objective = trial.objective if trial.status == OK else _floor_objective(self.trials)
        self.recorded_objectives.append(recorded_objective)


def warm_start(study: Study, history: History) -> Study:
    """Inject every trial (feasible, infeasible, crash, early-stop) as a
    completed observation. Crash and early-stop trials get the worst
    observed objective minus one observed range as their recorded value."""
    floor = _floor_objective(history.trials)
    for trial in history:
        problem = validate(study.space, trial.config)
        if problem is not None:
            raise SpecificationError(f"warm-start space mismatch: {problem}")
        study.add(trial, recorded_objective=trial.objective if trial.status == OK else floor)
        study.injected += 1
    return study


def _floor_objective(trials: Sequence[TrialResult]) -> float:
    objectives = [t.objective for t in trials if t.feasible]
    if not objectives:
        objectives = [t.objective for t in trials if t.status == OK]
    if not objectives:
        return -1.0
    lo, hi = min(objectives), max(objectives)
    return lo - (hi - lo) if hi > lo else lo - 1.0


def split_good_bad(
    history: History | Sequence[TrialResult], cfg: TpeConfig
) -> tuple[list[TrialResult], list[TrialResult]]:
    """Top ceil(gamma * N_feas) feasible trials by objective form the good
    set; every other trial (including crash/early-stop) is bad. Ties break
    toward the earlier trial index."""
    trials = list(history)
    if not trials:
        raise SpecificationError("cannot split an empty history")
    feasible = sorted(
        (t for t in trials if t.feasible), key=lambda t: (-t.objective, t.trial_index)
    )
    n_good = math.ceil(cfg.gamma_quantile * len(feasible)) if feasible else 0
    good = feasible[:n_good]
    good_ids = {id(t) for t in good}
    bad = [t for t in trials if id(t) not in good_ids]
    return good, bad


# ---------------------------------------------------------------------------
# Per-variable densities

def _payload(var: VariableSpec, value: Any) -> float:
    if var.kind == CATEGORICAL and var.ordered:
        return float(var.domain.index(value))
    return float(value)


def _value_range(var: VariableSpec) -> float:
    if var.kind == CATEGORICAL:
        return float(max(len(var.domain) - 1, 1))
    lo, hi = var.domain
    return float(hi - lo)


def _uniform_density(var: VariableSpec) -> float:
    if var.kind == CATEGORICAL:
        return 1.0 / len(var.domain)
    lo, hi = var.domain
    if var.kind == INTEGER:
        return 1.0 / (hi - lo + 1)
    return 1.0 / (hi - lo) if hi > lo else 1.0


def _kernel_widths(xs: list[float], value_range: float) -> list[float]:
    floor = max(value_range / 20.0, 1e-12)
    if len(xs) == 1:
        return [max(floor, value_range)]
    widths = []
    for i, x in enumerate(xs):
        nearest = min(abs(x - y) for j, y in enumerate(xs) if j != i)
        widths.append(max(floor, nearest))
    return widths


def _numeric_mixture(x: float, xs: list[float], value_range: float, uniform: float) -> float:
    widths = _kernel_widths(xs, value_range)
    total = uniform  # prior pseudo-component
    for mu, w in zip(xs, widths):
        z = (x - mu) / w
        total += math.exp(-0.5 * z * z) / (w * _SQRT_2PI)
    return total / (len(xs) + 1)


def _variable_density(
    var: VariableSpec, value: Any, observations: list[Any], smoothing: float
) -> float | None:
    """Density of `value` under the set's observations of this variable;
    None when the set never observed the variable active."""
    if not observations:
        return None
    if var.kind == CATEGORICAL and not var.ordered:
        count = sum(1 for v in observations if v == value)
        k = len(var.domain)
        return (count + smoothing) / (len(observations) + smoothing * k)
    xs = [_payload(var, v) for v in observations]
    return _numeric_mixture(_payload(var, value), xs, _value_range(var), _uniform_density(var))


def _set_density(
    space: SearchSpace,
    config: Config,
    trials: Sequence[TrialResult],
    smoothing: float,
    floor_at_uniform: bool,
) -> float:
    """Product over the config's active variables of per-variable densities,
    each built only from trials where that variable was active."""
    density = 1.0
    for var in space.variables:
        if var.name not in config:
            continue
        observations = [t.config[var.name] for t in trials if var.name in t.config]
        d = _variable_density(var, config[var.name], observations, smoothing)
        u = _uniform_density(var)
        if d is None:
            d = u
        elif floor_at_uniform:
            d = max(d, u)
        density *= d
    return density


# ---------------------------------------------------------------------------
# Scoring

def feasibility_prob(
    config: Config,
    history: History | Sequence[TrialResult],
    space: SearchSpace,
    cfg: TpeConfig | None = None,
) -> float:
    """Two-class Parzen posterior P(feasible | config, history) with
    Laplace-smoothed class priors; 0.5 on an empty history."""
    cfg = cfg if cfg is not None else TpeConfig()
    trials = list(history)
    if not trials:
        return 0.5
    feasible = [t for t in trials if t.feasible]
    bad = [t for t in trials if not t.feasible]
    n = len(trials)
    prior_f = (len(feasible) + 1.0) / (n + 2.0)
    prior_b = (len(bad) + 1.0) / (n + 2.0)
    d_f = _set_density(space, config, feasible, cfg.categorical_smoothing, floor_at_uniform=True)
    d_b = _set_density(space, config, bad, cfg.categorical_smoothing, floor_at_uniform=True)
    return prior_f * d_f / (prior_f * d_f + prior_b * d_b)


def score_candidate(
    config: Config,
    good: Sequence[TrialResult],
    bad: Sequence[TrialResult],
    history: History | Sequence[TrialResult],
    cfg: TpeConfig,
    space: SearchSpace,
) -> float:
    """Acquisition: density-under-good / density-under-bad, weighted by the
    feasibility probability. With an empty good set the feasibility factor
    alone ranks candidates (violation-avoiding fallback)."""
    p_feasible = feasibility_prob(config, history, space, cfg)
    if not good:
        return p_feasible
    ell = _set_density(space, config, good, cfg.categorical_smoothing, floor_at_uniform=False)
    g = _set_density(space, config, bad, cfg.categorical_smoothing, floor_at_uniform=False)
    return (ell / g) * p_feasible


# ---------------------------------------------------------------------------
# Suggestion

def suggest(study: Study, rng: np.random.Generator) -> Config:
    """Uniform during cold startup; afterwards draw n_candidates from the
    good-set generative model (structural variables first, conditionals
    given activeness) and return the best-scoring one. Deterministic given
    the generator state; score ties keep the earliest candidate."""
    cfg = study.cfg
    if not study.model_guided or not study.trials:
        study.last_suggestion = None
        return sample_uniform(study.space, rng)
    good, bad = split_good_bad(study.trials, cfg)
    candidates = []
    for _ in range(cfg.n_candidates):
        if good:
            candidates.append(_sample_from_good(study.space, good, cfg, rng))
        else:
            candidates.append(sample_uniform(study.space, rng))
    best_config = candidates[0]
    best_score = -math.inf
    for candidate in candidates:
        score = score_candidate(candidate, good, bad, study.trials, cfg, study.space)
        if score > best_score:
            best_score = score
            best_config = candidate
    study.last_suggestion = {"pool": len(candidates), "winning_score": best_score}
    return best_config


def _sample_from_good(
    space: SearchSpace, good: Sequence[TrialResult], cfg: TpeConfig, rng: np.random.Generator
) -> Config:
    config: Config = {}
    for var in space.variables:
        if not var.active_under(config):
            continue
        observations = [t.config[var.name] for t in good if var.name in t.config]
        if not observations:
            config[var.name] = _draw_uniform_value(var, rng)
        elif var.kind == CATEGORICAL and not var.ordered:
            k = len(var.domain)
            weights = np.array(
                [
                    sum(1 for v in observations if v == value) + cfg.categorical_smoothing
                    for value in var.domain
                ],
                dtype=float,
            )
            weights /= weights.sum()
            config[var.name] = var.domain[int(rng.choice(k, p=weights))]
        else:
            xs = [_payload(var, v) for v in observations]
            # component n is the uniform prior, matching the density mixture
            pick = int(rng.integers(len(xs) + 1))
            if pick == len(xs):
                config[var.name] = _draw_uniform_value(var, rng)
            else:
                widths = _kernel_widths(xs, _value_range(var))
                draw = float(rng.normal(xs[pick], widths[pick]))
                config[var.name] = _payload_to_value(var, draw)
    require_valid(space, config)
    return config


def _draw_uniform_value(var: VariableSpec, rng: np.random.Generator) -> Any:
    if var.kind == CATEGORICAL:
        return var.domain[int(rng.integers(len(var.domain)))]
    lo, hi = var.domain
    if var.kind == INTEGER:
        return int(rng.integers(lo, hi + 1))
    return float(rng.uniform(lo, hi))


def _payload_to_value(var: VariableSpec, draw: float) -> Any:
    if var.kind == CATEGORICAL:
        idx = int(round(draw))
        idx = min(max(idx, 0), len(var.domain) - 1)
        return var.domain[idx]
    lo, hi = var.domain
    if var.kind == INTEGER:
        return int(min(max(round(draw), lo), hi))
    return float(min(max(draw, lo), hi))
