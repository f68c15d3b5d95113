"""Aggregate tables and curve files from directories of run logs.

Every cell is computed from replayed logs, so regenerating a report from
the same files is byte-identical. Shapes: objective-and-waste by budget,
per-optimizer summary (objective, waste, feasible seeds), discovery rate
("k / n" cells), and a per-seed best-family grid, plus mean r(n) and W(n)
series files for external plotting.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .benchmarks import get_benchmark, global_optimum
from .errors import SpecificationError
from .metrics import MetricsReport, simple_regret
from .optimizers import RunRecord
from .runlog import replay

FORMATS = ("md", "csv", "txt")


@dataclass
class LoadedRun:
    path: Path
    record: RunRecord
    report: MetricsReport


def collect_runs(log_dir: str | Path, allow_mixed: bool = False) -> list[LoadedRun]:
    paths = sorted(Path(log_dir).glob("*.jsonl"))
    if not paths:
        raise SpecificationError(f"no .jsonl logs in {log_dir}")
    runs = []
    hashes = set()
    for path in paths:
        record, report = replay(path)
        hashes.add(record.constants_hash)
        runs.append(LoadedRun(path=path, record=record, report=report))
    if len(hashes) > 1 and not allow_mixed:
        raise SpecificationError(
            f"logs mix benchmark-constants hashes {sorted(hashes)}; "
            "rerun with --allow-mixed to aggregate anyway"
        )
    return runs


def complete_runs(runs: Sequence[LoadedRun]) -> list[LoadedRun]:
    return [r for r in runs if r.record.complete]


def incomplete_runs(runs: Sequence[LoadedRun]) -> list[LoadedRun]:
    return [r for r in runs if not r.record.complete]


# ---------------------------------------------------------------------------
# Formatting

def fmt_float(x: float | None, digits: int = 3) -> str:
    if x is None or (isinstance(x, float) and math.isinf(x)):
        return "-"
    return f"{x:.{digits}f}"


def fmt_pct(x: float) -> str:
    return f"{round(100 * x)}%"


def fmt_mean_std(mean: float | None, std: float | None, digits: int = 3) -> str:
    if mean is None:
        return "-"
    return f"{mean:.{digits}f} +/- {std:.{digits}f}"


def render_table(headers: Sequence[str], rows: Sequence[Sequence[str]], fmt: str) -> str:
    if fmt == "md":
        lines = ["| " + " | ".join(headers) + " |"]
        lines.append("|" + "|".join(" --- " for _ in headers) + "|")
        for row in rows:
            lines.append("| " + " | ".join(row) + " |")
        return "\n".join(lines) + "\n"
    if fmt == "csv":
        out = [",".join(headers)]
        out.extend(",".join(cell.replace(",", ";") for cell in row) for row in rows)
        return "\n".join(out) + "\n"
    if fmt == "txt":
        widths = [
            max(len(headers[i]), *(len(r[i]) for r in rows)) if rows else len(headers[i])
            for i in range(len(headers))
        ]
        lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
        lines.append("  ".join("-" * w for w in widths))
        for row in rows:
            lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)))
        return "\n".join(lines) + "\n"
    raise SpecificationError(f"unknown format {fmt!r} (known: {FORMATS})")


# ---------------------------------------------------------------------------
# Tables

def _optimizers(runs: Sequence[LoadedRun]) -> list[str]:
    seen: list[str] = []
    for r in runs:
        if r.record.optimizer not in seen:
            seen.append(r.record.optimizer)
    return seen


def _mean(values: Iterable[float]) -> float | None:
    xs = list(values)
    return sum(xs) / len(xs) if xs else None


def _mean_std(values: Iterable[float]) -> tuple[float | None, float | None]:
    xs = list(values)
    if not xs:
        return None, None
    mean = sum(xs) / len(xs)
    if len(xs) < 2:
        return mean, 0.0
    var = sum((v - mean) ** 2 for v in xs) / (len(xs) - 1)
    return mean, math.sqrt(var)


def budgets_table(runs: Sequence[LoadedRun], fmt: str) -> str:
    """Objective and wasted-budget fraction by budget, one column pair per
    optimizer."""
    optimizers = _optimizers(runs)
    by_cell: dict[tuple[int, str], list[LoadedRun]] = defaultdict(list)
    for r in runs:
        by_cell[(r.record.budget, r.record.optimizer)].append(r)
    budgets = sorted({r.record.budget for r in runs})
    headers = ["B"]
    for opt in optimizers:
        headers += [f"{opt} obj", f"{opt} W"]
    rows = []
    for budget in budgets:
        row = [str(budget)]
        for opt in optimizers:
            cell = by_cell.get((budget, opt), [])
            obj = _mean(r.report.best_objective for r in cell if r.report.best_objective is not None)
            wasted = _mean(r.report.final_wasted for r in cell)
            row += [fmt_float(obj, 2), fmt_pct(wasted) if wasted is not None else "-"]
        rows.append(row)
    return render_table(headers, rows, fmt)


def summary_table(runs: Sequence[LoadedRun], fmt: str) -> str:
    """Per-optimizer objective (mean +/- sample std over feasible seeds),
    wasted %, and feasible-seed count."""
    optimizers = _optimizers(runs)
    rows = []
    for opt in optimizers:
        group = [r for r in runs if r.record.optimizer == opt]
        objectives = [r.report.best_objective for r in group if r.report.best_objective is not None]
        mean, std = _mean_std(objectives)
        wasted = _mean(r.report.final_wasted for r in group)
        rows.append(
            [
                opt,
                fmt_mean_std(mean, std),
                fmt_pct(wasted) if wasted is not None else "-",
                f"{len(objectives)}/{len(group)}",
            ]
        )
    return render_table(["optimizer", "objective", "wasted", "feasible seeds"], rows, fmt)


def discovery_table(runs: Sequence[LoadedRun], family: str, fmt: str) -> str:
    """Seeds whose history contains a feasible trial of the target family."""
    optimizers = _optimizers(runs)
    rows = []
    for opt in optimizers:
        group = [r for r in runs if r.record.optimizer == opt]
        hits = sum(1 for r in group if _discovered(r, family))
        rows.append([opt, f"{hits} / {len(group)}"])
    return render_table(["optimizer", f"{family} discovery"], rows, fmt)


def _discovered(run: LoadedRun, family: str) -> bool:
    return any(
        t.feasible and t.config.get("model_name") == family for t in run.record.history
    )


def per_seed_grid(runs: Sequence[LoadedRun], fmt: str) -> str:
    """Best feasible model family per (seed, optimizer)."""
    optimizers = _optimizers(runs)
    seeds = sorted({r.record.seed for r in runs})
    index = {(r.record.seed, r.record.optimizer): r for r in runs}
    rows = []
    for seed in seeds:
        row = [str(seed)]
        for opt in optimizers:
            run = index.get((seed, opt))
            best = run.record.best_feasible if run else None
            row.append(best[0].get("model_name", "-") if best else "-")
        rows.append(row)
    return render_table(["seed", *optimizers], rows, fmt)


# ---------------------------------------------------------------------------
# Curves

def mean_curves(runs: Sequence[LoadedRun], f_star: float | None) -> dict[str, list[tuple[int, float, float]]]:
    """Per optimizer: (n, mean W(n), mean r(n)) series over seeds; the regret
    column is NaN-free only when every contributing run has n trials."""
    out: dict[str, list[tuple[int, float, float]]] = {}
    for opt in _optimizers(runs):
        group = [r for r in runs if r.record.optimizer == opt]
        horizon = max(len(r.record.history) for r in group)
        series = []
        for n in range(1, horizon + 1):
            wasted = [r.report.wasted[n - 1] for r in group if len(r.report.wasted) >= n]
            regret = math.nan
            if f_star is not None:
                values = []
                for r in group:
                    if len(r.record.history) >= n:
                        values.append(simple_regret(r.record.history, f_star)[n - 1])
                finite = [v for v in values if not math.isinf(v)]
                regret = sum(finite) / len(finite) if finite else math.inf
            series.append((n, sum(wasted) / len(wasted), regret))
        out[opt] = series
    return out


def write_report(
    runs: Sequence[LoadedRun],
    out_dir: str | Path,
    fmt: str = "md",
    family: str = "vit_tiny",
    compute_oracle: bool = True,
) -> list[Path]:
    """Emit the four table files plus curve series; returns written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    usable = complete_runs(runs)
    if not usable:
        raise SpecificationError("no complete runs to report")
    ext = {"md": "md", "csv": "csv", "txt": "txt"}[fmt]
    written = []

    def emit(name: str, text: str) -> None:
        path = out / f"{name}.{ext}"
        path.write_text(text, encoding="utf-8")
        written.append(path)

    emit("objective_by_budget", budgets_table(usable, fmt))
    emit("summary", summary_table(usable, fmt))
    spaces_have_model = all("model_name" in r.record.history[0].config for r in usable if len(r.record.history))
    if spaces_have_model:
        emit("discovery", discovery_table(usable, family, fmt))
        emit("best_family_per_seed", per_seed_grid(usable, fmt))

    f_star = None
    if compute_oracle:
        f_star = _oracle_value(usable)
    for opt, series in mean_curves(usable, f_star).items():
        lines = ["n,wasted_mean,regret_mean"]
        for n, wasted, regret in series:
            reg = "" if math.isnan(regret) else (("inf") if math.isinf(regret) else repr(regret))
            lines.append(f"{n},{wasted!r},{reg}")
        path = out / f"curves_{opt}.csv"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        written.append(path)

    skipped = incomplete_runs(runs)
    if skipped:
        lines = [f"{r.path.name}: {len(r.record.history)}/{r.record.budget} trials" for r in skipped]
        path = out / "incomplete_runs.txt"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        written.append(path)
    return written


def _oracle_value(runs: Sequence[LoadedRun]) -> float | None:
    keys = {(r.record.benchmark, r.record.scenario.name, r.record.hardware) for r in runs}
    if len(keys) != 1:
        return None
    benchmark_name, scenario_name, hardware = next(iter(keys))
    bench = get_benchmark(benchmark_name)
    optimum = global_optimum(
        bench, bench.scenario(scenario_name), bench.constants.profile(hardware)
    )
    return optimum.value if optimum.found else None
