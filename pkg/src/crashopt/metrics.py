"""Run metrics: simple regret, wasted budget, discovery, wall-clock cost,
and the closed-form family-discovery probability under uniform sampling."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import SpecificationError
from .evaluator import History

INFEASIBLE_REGRET = math.inf


def simple_regret(history: History, f_star: float) -> list[float]:
    """r(n) = f_star - best feasible objective among the first n trials;
    +inf sentinel while no feasible trial exists."""
    curve: list[float] = []
    best = -math.inf
    for trial in history:
        if trial.feasible and trial.objective > best:
            best = trial.objective
        curve.append(INFEASIBLE_REGRET if best == -math.inf else f_star - best)
    return curve


def wasted_fraction(history: History, n: int) -> float:
    """Share of the first n trials that are not feasible."""
    if not 1 <= n <= len(history):
        raise SpecificationError(f"n={n} outside 1..{len(history)}")
    bad = sum(1 for trial in history.trials[:n] if not trial.feasible)
    return bad / n


def wasted_curve(history: History) -> list[float]:
    bad = 0
    curve = []
    for i, trial in enumerate(history, start=1):
        bad += 0 if trial.feasible else 1
        curve.append(bad / i)
    return curve


def first_feasible_index(history: History) -> int | None:
    for trial in history:
        if trial.feasible:
            return trial.trial_index
    return None


def discovery(history: History, target_family: str) -> bool:
    """True iff some *feasible* trial uses the target model family."""
    saw_variable = False
    for trial in history:
        if "model_name" in trial.config:
            saw_variable = True
            if trial.feasible and trial.config["model_name"] == target_family:
                return True
    if not saw_variable and len(history) > 0:
        raise SpecificationError("history has no model_name variable; discovery undefined")
    return False


def discovery_probability(families: int, rho_crash: float, n_trials: int) -> float:
    """P(at least one surviving draw of a given family in n uniform trials):
    1 - (1 - (1/K)(1 - rho))^n."""
    if families < 1 or n_trials < 0 or not 0 <= rho_crash <= 1:
        raise SpecificationError("need K >= 1, n >= 0, rho in [0, 1]")
    per_trial = (1.0 / families) * (1.0 - rho_crash)
    return 1.0 - (1.0 - per_trial) ** n_trials


def wall_clock(history: History) -> float:
    return sum(trial.cost_seconds for trial in history)


@dataclass
class MetricsReport:
    """Per-run derived quantities (regret curve only when an oracle value
    was supplied)."""

    best_objective: float | None
    first_feasible: int | None
    wasted: list[float]
    wall_clock_seconds: float
    regret: list[float] | None = None
    discovered: dict[str, bool] = field(default_factory=dict)

    @property
    def final_wasted(self) -> float:
        return self.wasted[-1] if self.wasted else 0.0


def metrics_report(
    history: History,
    f_star: float | None = None,
    families: Iterable[str] = (),
) -> MetricsReport:
    best = history.best_feasible
    return MetricsReport(
        best_objective=None if best is None else best.objective,
        first_feasible=first_feasible_index(history),
        wasted=wasted_curve(history),
        wall_clock_seconds=wall_clock(history),
        regret=None if f_star is None else simple_regret(history, f_star),
        discovered={fam: discovery(history, fam) for fam in families},
    )


@dataclass(frozen=True)
class GroupSummary:
    """Aggregate over the seeds of one (optimizer, benchmark) group."""

    n_runs: int
    objective_mean: float | None
    objective_std: float | None
    feasible_runs: int
    wasted_mean: float
    discovery_counts: dict[str, int]


def summarize_group(reports: Sequence[MetricsReport]) -> GroupSummary:
    """Mean +/- sample standard deviation over seeds; objective statistics
    cover only runs that found a feasible point."""
    objectives = [r.best_objective for r in reports if r.best_objective is not None]
    mean, std = _mean_std(objectives)
    families: dict[str, int] = {}
    for r in reports:
        for fam, hit in r.discovered.items():
            families[fam] = families.get(fam, 0) + (1 if hit else 0)
    return GroupSummary(
        n_runs=len(reports),
        objective_mean=mean,
        objective_std=std,
        feasible_runs=len(objectives),
        wasted_mean=sum(r.final_wasted for r in reports) / len(reports) if reports else 0.0,
        discovery_counts=families,
    )


def _mean_std(values: Sequence[float]) -> tuple[float | None, float | None]:
    if not values:
        return None, None
    mean = sum(values) / len(values)
    if len(values) < 2:
        return mean, 0.0
    var = sum((v - mean) ** 2 for v in values) / (len(values) - 1)
    return mean, math.sqrt(var)
