"""Feasible-first simulated annealing over hierarchical spaces.

Phase 1 of the hybrid optimizer: minimize total constraint violation until
a feasible configuration appears, then maximize the objective over feasible
states. Crashed and early-stopped proposals never become the current state;
they still enter the history and feed the subspace tracker, which
temporarily blacklists categorical values after repeated consecutive
failures (with cooldown, success reset, and a safety valve that never
empties a domain).

Stochastic choices draw from named streams with a fixed order per trial:
one uniform for the move-type decision, then the proposal draws, then (only
when the acceptance rule is probabilistic) one acceptance uniform, then
(only after accepting a strictly worse feasible move) one snap-back
uniform. Deterministic accept/reject paths consume no randomness, so traces
are reproducible and ablations are comparable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Any

import numpy as np

from .benchmarks import ConstraintSpec, OK
from .errors import SpecificationError
from .evaluator import CRASH, EARLY_STOP, History, PHASE_INIT, PHASE_SA, TrialResult
from .space import CATEGORICAL, CONTINUOUS, INTEGER, Config, SearchSpace, VariableSpec, sample_uniform

STAGE_FEASIBILITY = "feasibility"
STAGE_OPTIMIZATION = "optimization"

# Handoff evidence requirements (fixed by the method, not tunable).
HANDOFF_MIN_FEASIBLE = 5
HANDOFF_MIN_BAD = 3


@dataclass(frozen=True)
class AnnealConfig:
    t0: float = 1.0
    alpha_feasibility: float = 0.95
    alpha_optimization: float = 0.92
    beta: float = 2.5
    gamma: float = 0.8
    patience: int = 4
    n_init: int = 5
    n_min: int = 8
    n_max: int = 15
    elite_restart_period: int = 12
    restart_budget_fraction: float = 0.7
    snap_back_base: float = 0.4
    p_s_start: float = 0.5
    p_s_decay: float = 0.35
    p_s_fixed: float = 0.3
    late_restarts_allowed: bool = False
    snap_back_enabled: bool = True
    adaptive_ps_enabled: bool = True
    elite_restart_enabled: bool = True
    blacklist_enabled: bool = True
    int_step_mean_scale: float = 2.0

    def __post_init__(self) -> None:
        for name in ("alpha_feasibility", "alpha_optimization"):
            a = getattr(self, name)
            if not 0 < a < 1:
                raise SpecificationError(f"{name} must be in (0, 1)")
        if not self.beta > 1:
            raise SpecificationError("beta must exceed 1")
        if not 0 < self.gamma <= 1:
            raise SpecificationError("gamma must be in (0, 1]")
        if not (1 <= self.n_init < self.n_min <= self.n_max):
            raise SpecificationError("need 1 <= n_init < n_min <= n_max")
        if not self.t0 > 0:
            raise SpecificationError("t0 must be positive")

    def to_dict(self) -> dict[str, Any]:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}

    @staticmethod
    def from_dict(doc: dict[str, Any]) -> "AnnealConfig":
        return replace(AnnealConfig(), **doc)


@dataclass(frozen=True)
class TemperatureState:
    temperature: float
    consecutive_non_improving: int = 0

    def __post_init__(self) -> None:
        if not self.temperature > 0:
            raise SpecificationError("temperature must stay positive")


def update_temperature(
    ts: TemperatureState, improved: bool, alpha: float, cfg: AnnealConfig
) -> TemperatureState:
    """Adaptive schedule: cool on improvement, hold while patient, then
    reheat to min(beta*T, gamma*T0). Crash/early-stop steps count as
    non-improving."""
    if improved:
        return TemperatureState(alpha * ts.temperature, 0)
    stalled = ts.consecutive_non_improving + 1
    if stalled >= cfg.patience:
        return TemperatureState(min(cfg.beta * ts.temperature, cfg.gamma * cfg.t0), 0)
    return TemperatureState(ts.temperature, stalled)


def structural_prob(n: int, n_init: int, budget: int, cfg: AnnealConfig | None = None) -> float:
    """Probability of a structural move at trial n; decays linearly from
    p_s_start at n_init to p_s_start - p_s_decay at the budget."""
    cfg = cfg if cfg is not None else AnnealConfig()
    if budget <= n_init:
        raise SpecificationError("budget must exceed n_init")
    if not cfg.adaptive_ps_enabled:
        return cfg.p_s_fixed
    return cfg.p_s_start - cfg.p_s_decay * (n - n_init) / (budget - n_init)


def sigma_violation(constraints: tuple[ConstraintSpec, ...] | list[ConstraintSpec]) -> float:
    """Violation scale for the feasibility stage: 10% of the mean absolute
    constraint threshold, floored at 0.1."""
    if not constraints:
        raise SpecificationError("at least one constraint required")
    mean_abs = sum(abs(c.threshold) for c in constraints) / len(constraints)
    return max(0.1, mean_abs * 0.1)


def sigma_objective(f_min: float, f_max: float) -> float:
    """Objective scale for the optimization stage: half the observed range,
    floored at 0.01."""
    if f_max < f_min:
        raise SpecificationError("f_max must be >= f_min")
    return max(0.01, (f_max - f_min) / 2.0)


def accept_feasibility(
    v_curr: float, v_prop: float, temperature: float, sigma_v: float, rng: np.random.Generator
) -> bool:
    """Accept deterministically on violation decrease, else Metropolis."""
    if v_prop < v_curr:
        return True
    return rng.random() < math.exp(-(v_prop - v_curr) / (temperature * sigma_v))


def accept_optimization(
    f_curr: float,
    f_prop: float,
    prop_feasible: bool,
    temperature: float,
    sigma_f: float,
    rng: np.random.Generator,
) -> bool:
    """Reject infeasible outright; accept improvements; else Metropolis."""
    if not prop_feasible:
        return False
    if f_prop > f_curr:
        return True
    return rng.random() < math.exp(-(f_curr - f_prop) / (temperature * sigma_f))


# ---------------------------------------------------------------------------
# Subspace blacklisting

class SubspaceTracker:
    """Per (categorical variable, value) consecutive-failure bookkeeping.

    Three consecutive crash/infeasible/early-stop uses blacklist a value;
    any feasible trial using it clears the blacklist and resets its count;
    after `cooldown` trials a blacklist expires on its own. The safety
    valve never lets a variable lose its last available value.
    """

    def __init__(self, space: SearchSpace, failure_threshold: int = 3, cooldown: int = 8):
        self.space = space
        self.failure_threshold = failure_threshold
        self.cooldown = cooldown
        self._counts: dict[tuple[str, Any], int] = {}
        self._ages: dict[tuple[str, Any], int] = {}
        self._categorical = {v.name for v in space.variables if v.kind == CATEGORICAL}

    def is_blacklisted(self, var: str, value: Any) -> bool:
        return (var, value) in self._ages

    def allowed_values(self, var: VariableSpec) -> list[Any]:
        return [v for v in var.domain if (var.name, v) not in self._ages]

    def blacklisted(self) -> list[tuple[str, Any]]:
        return sorted(self._ages, key=lambda k: (k[0], str(k[1])))

    def update(self, trial: TrialResult) -> list[dict[str, Any]]:
        """Age blacklists, then apply the trial's outcome. Returns the
        blacklist events this trial produced (for the run log)."""
        events: list[dict[str, Any]] = []
        for key in list(self._ages):
            self._ages[key] += 1
            if self._ages[key] >= self.cooldown:
                del self._ages[key]
                self._counts[key] = 0
                events.append(
                    {"event": "blacklist_clear", "var": key[0], "value": key[1], "reason": "cooldown"}
                )
        pairs = [
            (name, value)
            for name, value in trial.config.items()
            if name in self._categorical
        ]
        if trial.feasible:
            for key in pairs:
                self._counts[key] = 0
                if key in self._ages:
                    del self._ages[key]
                    events.append(
                        {"event": "blacklist_clear", "var": key[0], "value": key[1], "reason": "success"}
                    )
        else:
            for key in pairs:
                self._counts[key] = self._counts.get(key, 0) + 1
                if (
                    self._counts[key] >= self.failure_threshold
                    and key not in self._ages
                    and self._can_blacklist(key[0])
                ):
                    self._ages[key] = 0
                    events.append({"event": "blacklist_set", "var": key[0], "value": key[1]})
        return events

    def _can_blacklist(self, var_name: str) -> bool:
        domain = self.space[var_name].domain
        available = sum(1 for v in domain if (var_name, v) not in self._ages)
        return available >= 2


# ---------------------------------------------------------------------------
# Annealer state and proposals

@dataclass
class AnnealerState:
    current: Config
    current_violation: float
    current_objective: float | None
    stage: str
    temperature: TemperatureState
    tracker: SubspaceTracker
    sigma_v: float
    sigma_f: float = 0.01
    trials_since_restart: int = 0
    pick_third_next: bool = False
    f_min: float | None = None
    f_max: float | None = None
    int_step_mean_scale: float = 2.0

    def observe_objective(self, value: float) -> None:
        self.f_min = value if self.f_min is None else min(self.f_min, value)
        self.f_max = value if self.f_max is None else max(self.f_max, value)
        self.sigma_f = sigma_objective(self.f_min, self.f_max)


def propose_neighbor(
    state: AnnealerState,
    space: SearchSpace,
    p_s: float,
    rng: np.random.Generator,
    mask_blacklist: bool = True,
) -> Config:
    """One neighbor of the current state: with probability p_s a structural
    move (resample one unordered categorical, masking blacklisted values and
    resampling newly activated variables), otherwise a numerical move on one
    active integer/ordered/continuous variable scaled by temperature."""
    current = state.current
    structural_move = rng.random() < p_s

    struct_vars = [
        v
        for v in space.structural
        if v.name in current and len(_alternatives(state, v, current[v.name], mask_blacklist)) > 0
    ]
    numeric_vars = [
        v
        for v in space.variables
        if v.name in current
        and (v.kind in (INTEGER, CONTINUOUS) or (v.kind == CATEGORICAL and v.ordered))
        and _ladder_length(state, v, current[v.name], mask_blacklist) >= 2
    ]

    if structural_move and struct_vars:
        return _structural_move(state, space, struct_vars, current, rng, mask_blacklist)
    if numeric_vars:
        return _numerical_move(state, numeric_vars, current, rng, mask_blacklist)
    if struct_vars:
        return _structural_move(state, space, struct_vars, current, rng, mask_blacklist)
    raise SpecificationError("no movable variable in the current configuration")


def _alternatives(
    state: AnnealerState, var: VariableSpec, current_value: Any, mask: bool
) -> list[Any]:
    values = state.tracker.allowed_values(var) if mask else list(var.domain)
    return [v for v in values if v != current_value]


def _ladder_length(state: AnnealerState, var: VariableSpec, current_value: Any, mask: bool) -> int:
    if var.kind == INTEGER:
        lo, hi = var.domain
        return hi - lo + 1
    if var.kind == CONTINUOUS:
        lo, hi = var.domain
        return 2 if hi > lo else 1
    return len(_ladder(state, var, current_value, mask))


def _ladder(state: AnnealerState, var: VariableSpec, current_value: Any, mask: bool) -> list[Any]:
    if not mask:
        return list(var.domain)
    return [v for v in var.domain if v == current_value or not state.tracker.is_blacklisted(var.name, v)]


def _structural_move(
    state: AnnealerState,
    space: SearchSpace,
    candidates: list[VariableSpec],
    current: Config,
    rng: np.random.Generator,
    mask: bool,
) -> Config:
    var = candidates[int(rng.integers(len(candidates)))]
    options = _alternatives(state, var, current[var.name], mask)
    new_value = options[int(rng.integers(len(options)))]
    proposal: Config = {}
    for v in space.variables:
        if not v.active_under(proposal):
            continue
        if v.name == var.name:
            proposal[v.name] = new_value
        elif v.name in current:
            proposal[v.name] = current[v.name]
        else:
            proposal[v.name] = _sample_masked(state, v, rng, mask)
    return proposal


def _sample_masked(
    state: AnnealerState, var: VariableSpec, rng: np.random.Generator, mask: bool
) -> Any:
    if var.kind == CATEGORICAL:
        values = state.tracker.allowed_values(var) if mask else list(var.domain)
        if not values:
            values = list(var.domain)
        return values[int(rng.integers(len(values)))]
    lo, hi = var.domain
    if var.kind == INTEGER:
        return int(rng.integers(lo, hi + 1))
    return float(rng.uniform(lo, hi))


def _numerical_move(
    state: AnnealerState,
    candidates: list[VariableSpec],
    current: Config,
    rng: np.random.Generator,
    mask: bool,
) -> Config:
    var = candidates[int(rng.integers(len(candidates)))]
    proposal = dict(current)
    temperature = state.temperature.temperature
    if var.kind == CONTINUOUS:
        lo, hi = var.domain
        scale = 0.2 * temperature * (hi - lo)
        cur = current[var.name]
        value = cur
        for _ in range(16):
            candidate = min(max(cur + rng.normal(0.0, scale), lo), hi)
            if candidate != cur:
                value = candidate
                break
        else:
            value = float(rng.uniform(lo, hi))
        proposal[var.name] = float(value)
        return proposal

    if var.kind == INTEGER:
        lo, hi = var.domain
        ladder = list(range(lo, hi + 1))
        cur_idx = current[var.name] - lo
    else:
        ladder = _ladder(state, var, current[var.name], mask)
        cur_idx = ladder.index(current[var.name])

    mean_steps = max(1.0, temperature * state.int_step_mean_scale)
    k = int(rng.geometric(min(1.0, 1.0 / mean_steps)))
    direction = 1 if rng.random() < 0.5 else -1
    new_idx = min(max(cur_idx + direction * k, 0), len(ladder) - 1)
    if new_idx == cur_idx:
        new_idx = min(max(cur_idx - direction * k, 0), len(ladder) - 1)
    proposal[var.name] = ladder[new_idx]
    return proposal


# ---------------------------------------------------------------------------
# Restart and snap-back

def maybe_snap_back(
    state: AnnealerState,
    n: int,
    budget: int,
    history: History,
    cfg: AnnealConfig,
    rng: np.random.Generator,
    accepted_worse_feasible: bool,
) -> Config | None:
    """After accepting a strictly worse feasible move, return to the best
    feasible state with probability snap_back_base * (1 - n/budget)."""
    if not (cfg.snap_back_enabled and accepted_worse_feasible):
        return None
    best = history.best_feasible
    if best is None:
        return None
    if rng.random() < cfg.snap_back_base * (1.0 - n / budget):
        return dict(best.config)
    return None


def maybe_elite_restart(
    state: AnnealerState, n: int, budget: int, history: History, cfg: AnnealConfig
) -> Config | None:
    """Every elite_restart_period trials inside the restart window, jump to
    the 2nd or 3rd best feasible configuration (alternating)."""
    if not cfg.elite_restart_enabled:
        return None
    if state.trials_since_restart < cfg.elite_restart_period:
        return None
    if not cfg.late_restarts_allowed and n >= cfg.restart_budget_fraction * budget:
        return None
    ranked = sorted(history.feasible_trials(), key=lambda t: (-t.objective, t.trial_index))
    if len(ranked) < 3:
        return None
    pick = ranked[2] if state.pick_third_next else ranked[1]
    state.pick_third_next = not state.pick_third_next
    state.trials_since_restart = 0
    return dict(pick.config)


def restart_and_snapback(
    state: AnnealerState,
    n: int,
    budget: int,
    history: History,
    cfg: AnnealConfig,
    rng: np.random.Generator,
    accepted_worse_feasible: bool = False,
) -> tuple[Config, str] | None:
    """Snap-back is evaluated first; when it fires, the elite restart is
    suppressed for this trial. Returns the replacement and which mechanism
    produced it."""
    snapped = maybe_snap_back(state, n, budget, history, cfg, rng, accepted_worse_feasible)
    if snapped is not None:
        return snapped, "snap_back"
    restarted = maybe_elite_restart(state, n, budget, history, cfg)
    if restarted is not None:
        return restarted, "elite_restart"
    return None


def handoff_ready(history: History, cfg: AnnealConfig) -> bool:
    n = len(history)
    if n >= cfg.n_max:
        return True
    return n >= cfg.n_min and history.n_feas >= HANDOFF_MIN_FEASIBLE and history.n_bad >= HANDOFF_MIN_BAD


# ---------------------------------------------------------------------------
# Phase-1 driver

def run_tba(
    space: SearchSpace,
    evaluator: Any,
    cfg: AnnealConfig,
    budget: int,
    streams: Any,
    stop_at_handoff: bool,
    history: History | None = None,
) -> History:
    """Run feasible-first annealing: n_init uniform trials, then the
    propose/evaluate/accept loop. With stop_at_handoff the loop exits once
    the handoff criterion holds; otherwise it consumes the full budget
    (the pure-SA baseline)."""
    if budget < cfg.n_init + 1:
        raise SpecificationError("budget must allow at least one annealing step")
    history = history if history is not None else History()
    tracker = SubspaceTracker(space)
    state = AnnealerState(
        current={},
        current_violation=math.inf,
        current_objective=None,
        stage=STAGE_FEASIBILITY,
        temperature=TemperatureState(cfg.t0),
        tracker=tracker,
        sigma_v=sigma_violation(list(evaluator.scenario.constraints)),
        int_step_mean_scale=cfg.int_step_mean_scale,
    )

    for _ in range(cfg.n_init):
        config = sample_uniform(space, streams.sampling)
        trial = evaluator.run(config, len(history) + 1, PHASE_INIT)
        for event in tracker.update(trial):
            trial.events.append(event)
        if trial.status == OK:
            state.observe_objective(trial.objective)
        history.append(trial)

    _init_anchor(state, history, streams)

    while len(history) < budget:
        if stop_at_handoff and handoff_ready(history, cfg):
            history.trials[-1].annotate("handoff", n=len(history))
            break
        n = len(history) + 1
        p_s = structural_prob(n, cfg.n_init, budget, cfg)
        proposal = propose_neighbor(state, space, p_s, streams.proposal, cfg.blacklist_enabled)
        trial = evaluator.run(proposal, n, PHASE_SA)
        for event in tracker.update(trial):
            trial.events.append(event)
        if trial.status == OK:
            state.observe_objective(trial.objective)
        history.append(trial)

        stage_before = state.stage
        accepted = False
        improved = False
        accepted_worse_feasible = False

        if trial.status in (CRASH, EARLY_STOP):
            pass
        elif state.stage == STAGE_FEASIBILITY:
            accepted = accept_feasibility(
                state.current_violation,
                trial.violation,
                state.temperature.temperature,
                state.sigma_v,
                streams.acceptance,
            )
            improved = trial.violation < state.current_violation
            if accepted:
                _adopt(state, trial)
            if trial.feasible:
                state.stage = STAGE_OPTIMIZATION
                trial.annotate("stage_switch", stage=STAGE_OPTIMIZATION)
        else:
            if trial.feasible:
                accepted = accept_optimization(
                    state.current_objective,
                    trial.objective,
                    True,
                    state.temperature.temperature,
                    state.sigma_f,
                    streams.acceptance,
                )
                improved = trial.objective > state.current_objective
                if accepted:
                    accepted_worse_feasible = trial.objective < state.current_objective
                    _adopt(state, trial)

        trial.annotate("proposal", accepted=accepted, stage=stage_before)

        alpha = cfg.alpha_feasibility if stage_before == STAGE_FEASIBILITY else cfg.alpha_optimization
        before_t = state.temperature.temperature
        state.temperature = update_temperature(state.temperature, improved, alpha, cfg)
        if state.temperature.temperature > before_t:
            trial.annotate("reheat", temperature=state.temperature.temperature)

        state.trials_since_restart += 1
        replacement = restart_and_snapback(
            state, n, budget, history, cfg, streams.acceptance, accepted_worse_feasible
        )
        if replacement is not None:
            config_back, mechanism = replacement
            trial.annotate(mechanism)
            _adopt_config(state, config_back, history)

    return history


def _adopt(state: AnnealerState, trial: TrialResult) -> None:
    state.current = dict(trial.config)
    state.current_violation = trial.violation
    state.current_objective = trial.objective


def _adopt_config(state: AnnealerState, config: Config, history: History) -> None:
    # Replacement configs come from feasible history entries.
    for t in reversed(history.trials):
        if t.feasible and t.config == config:
            _adopt(state, t)
            return
    state.current = dict(config)


def _init_anchor(state: AnnealerState, history: History, streams: Any) -> None:
    """Anchor after the init trials: best feasible, else least-violating ok
    trial, else a fresh unevaluated uniform sample (crashed or early-stopped
    configurations never become the current state)."""
    best = history.best_feasible
    if best is not None:
        _adopt(state, best)
        state.stage = STAGE_OPTIMIZATION
        return
    ok_trials = [t for t in history.trials if t.status == OK]
    if ok_trials:
        least = min(ok_trials, key=lambda t: (t.violation, t.trial_index))
        _adopt(state, least)
        return
    state.current = sample_uniform(state.tracker.space, streams.sampling)
    state.current_violation = math.inf
    state.current_objective = None
