"""Command-line harness: single runs, sweeps, report generation, and
benchmark calibration.

Any flag of `run` can come from a JSON run-configuration file (--config);
explicit flags win. The only environment variable honored is CRASHOPT_OUT,
which overrides the output directory.
"""
from __future__ import annotations

import argparse
import json
import os
import shlex
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .annealer import AnnealConfig
from .benchmarks import (
    BENCHMARK_NAMES,
    calibration_rates,
    default_constants,
    get_benchmark,
)
from .errors import SpecificationError
from .evaluator import ExternalEvaluator, InProcessEvaluator, TimeoutPolicy
from .metrics import metrics_report
from .optimizers import OPTIMIZER_NAMES, execute_run
from .reports import FORMATS, collect_runs, write_report
from .runlog import LoggingEvaluator, RunLogWriter, log_filename, make_header, replay, run_id_for
from .tpe import TpeConfig


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except SpecificationError as exc:
        parser.exit(2, f"error: {exc}\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crashopt")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute one optimization run")
    run.add_argument("--config", help="JSON run-configuration file supplying any flag")
    run.add_argument("--benchmark")
    run.add_argument("--optimizer")
    run.add_argument("--scenario")
    run.add_argument("--hardware")
    run.add_argument("--budget", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--out")
    run.add_argument("--evaluator", help="exec:<command> for an external worker")
    run.add_argument("--timeout-multiplier", type=float, dest="timeout_multiplier")
    run.add_argument("--no-timeout", action="store_true")
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="factorial multi-seed multi-optimizer experiment")
    sweep.add_argument("--benchmark", required=True)
    sweep.add_argument("--scenario")
    sweep.add_argument("--hardware")
    sweep.add_argument("--optimizers", default=",".join(OPTIMIZER_NAMES))
    sweep.add_argument("--budgets", required=True, help="comma list, e.g. 10,15,20")
    sweep.add_argument("--seeds", default="0..9", help="range a..b or comma list")
    sweep.add_argument("--out", required=True)
    sweep.add_argument("--resume", action="store_true")
    sweep.add_argument("--workers", type=int, default=1)
    sweep.set_defaults(func=cmd_sweep)

    report = sub.add_parser("report", help="emit tables and curves from logs")
    report.add_argument("--logs", required=True)
    report.add_argument("--out")
    report.add_argument("--format", choices=FORMATS, default="md")
    report.add_argument("--family", default="vit_tiny")
    report.add_argument("--allow-mixed", action="store_true")
    report.add_argument("--no-oracle", action="store_true")
    report.set_defaults(func=cmd_report)

    calibrate = sub.add_parser("calibrate", help="Monte-Carlo invalidity measurement")
    calibrate.add_argument("--benchmark", required=True)
    calibrate.add_argument("--scenario")
    calibrate.add_argument("--hardware")
    calibrate.add_argument("--samples", type=int, required=True)
    calibrate.add_argument("--seed", type=int, default=0)
    calibrate.set_defaults(func=cmd_calibrate)

    return parser


# ---------------------------------------------------------------------------
# run

def cmd_run(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    settings = _merge_run_settings(args, parser)
    result = _execute_single(settings)
    record = result["record"]
    print(
        f"run {result['run_id']}: "
        f"{'complete' if record.complete else 'INCOMPLETE'}; "
        f"trials={len(record.history)} "
        f"best={_fmt_best(record)} "
        f"wasted={result['wasted']:.2f} "
        f"wall_clock={result['wall_clock']:.1f}s "
        f"log={result['log']}"
    )
    return 0 if record.complete else 1


def _fmt_best(record: Any) -> str:
    best = record.best_feasible
    return "none" if best is None else f"{best[1]:.4f}"


def _merge_run_settings(
    args: argparse.Namespace, parser: argparse.ArgumentParser
) -> dict[str, Any]:
    file_cfg: dict[str, Any] = {}
    if args.config:
        file_cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))

    def pick(flag: str, default: Any = None) -> Any:
        value = getattr(args, flag, None)
        if value is not None and value is not False:
            return value
        return file_cfg.get(flag, default)

    benchmark_name = pick("benchmark")
    optimizer = pick("optimizer")
    if benchmark_name not in BENCHMARK_NAMES:
        parser.error(f"unknown benchmark {benchmark_name!r}; choose from {BENCHMARK_NAMES}")
    if optimizer not in OPTIMIZER_NAMES:
        parser.error(f"unknown optimizer {optimizer!r}; choose from {OPTIMIZER_NAMES}")
    budget = pick("budget")
    seed = pick("seed", 0)
    if budget is None or budget < 1:
        parser.error("--budget must be a positive integer")
    out = os.environ.get("CRASHOPT_OUT") or pick("out", "runs")
    timeout_cfg = file_cfg.get("timeout", {})
    multiplier = pick("timeout_multiplier", timeout_cfg.get("multiplier", 5.0))
    timeout_enabled = not args.no_timeout and timeout_cfg.get("enabled", True)
    return {
        "benchmark": benchmark_name,
        "optimizer": optimizer,
        "scenario": pick("scenario"),
        "hardware": pick("hardware", "mid"),
        "budget": int(budget),
        "seed": int(seed),
        "out": out,
        "evaluator": pick("evaluator"),
        "timeout_multiplier": float(multiplier),
        "timeout_enabled": bool(timeout_enabled),
        "anneal": file_cfg.get("anneal", {}),
        "tpe": file_cfg.get("tpe", {}),
    }


def _execute_single(settings: dict[str, Any]) -> dict[str, Any]:
    constants = default_constants()
    bench = get_benchmark(settings["benchmark"], constants)
    scenario = bench.scenario(settings["scenario"])
    hw = constants.profile(settings["hardware"])
    policy = TimeoutPolicy.for_scenario(
        scenario, multiplier=settings["timeout_multiplier"], enabled=settings["timeout_enabled"]
    )
    anneal_cfg = AnnealConfig.from_dict(settings["anneal"])
    tpe_cfg = TpeConfig.from_dict(settings["tpe"])

    run_id = run_id_for(
        bench.name, scenario.name, settings["optimizer"], settings["budget"], settings["seed"]
    )
    out_dir = Path(settings["out"])
    log_path = out_dir / log_filename(run_id)
    header = make_header(
        run_id=run_id,
        optimizer=settings["optimizer"],
        benchmark=bench.name,
        scenario=scenario,
        hardware=hw.name,
        seed=settings["seed"],
        budget=settings["budget"],
        constants_hash=constants.sha256,
        resolved_config={
            "anneal": anneal_cfg.to_dict(),
            "tpe": tpe_cfg.to_dict(),
            "timeout": {
                "latency_constraint_ms": policy.latency_constraint_ms,
                "multiplier": policy.multiplier,
                "enabled": policy.enabled,
            },
        },
    )

    if settings["evaluator"]:
        spec = settings["evaluator"]
        if not spec.startswith("exec:"):
            raise SpecificationError(f"--evaluator must be exec:<command>, got {spec!r}")
        inner: Any = ExternalEvaluator(
            shlex.split(spec[len("exec:"):]), scenario, hw, policy, constants.sha256
        )
    else:
        inner = InProcessEvaluator(bench, scenario, hw, policy)

    with RunLogWriter(log_path, header) as writer:
        logging_eval = LoggingEvaluator(inner, writer)
        try:
            record = execute_run(
                settings["optimizer"],
                bench.name,
                bench.space,
                logging_eval,
                scenario,
                hw.name,
                settings["budget"],
                settings["seed"],
                constants.sha256,
                anneal_cfg,
                tpe_cfg,
            )
        finally:
            if hasattr(inner, "close"):
                inner.close()

    report = metrics_report(record.history)
    return {
        "run_id": run_id,
        "record": record,
        "log": str(log_path),
        "wasted": report.final_wasted,
        "wall_clock": report.wall_clock_seconds,
    }


# ---------------------------------------------------------------------------
# sweep

def _sweep_task(task: dict[str, Any]) -> dict[str, Any]:
    result = _execute_single(task["settings"])
    return {
        "run_id": result["run_id"],
        "log": result["log"],
        "status": "complete" if result["record"].complete else "incomplete",
    }


def cmd_sweep(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    optimizers = [o.strip() for o in args.optimizers.split(",") if o.strip()]
    for opt in optimizers:
        if opt not in OPTIMIZER_NAMES:
            parser.error(f"unknown optimizer {opt!r}; choose from {OPTIMIZER_NAMES}")
    if args.benchmark not in BENCHMARK_NAMES:
        parser.error(f"unknown benchmark {args.benchmark!r}; choose from {BENCHMARK_NAMES}")
    budgets = [int(b) for b in args.budgets.split(",")]
    if any(b < 1 for b in budgets):
        parser.error("budgets must be positive")
    seeds = _parse_seeds(args.seeds, parser)
    out_dir = Path(os.environ.get("CRASHOPT_OUT") or args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    tasks = []
    manifest_rows = []
    bench = get_benchmark(args.benchmark)
    scenario_name = args.scenario or bench.default_scenario_name
    for optimizer in optimizers:
        for budget in budgets:
            for seed in seeds:
                run_id = run_id_for(args.benchmark, scenario_name, optimizer, budget, seed)
                log_path = out_dir / log_filename(run_id)
                if args.resume and log_path.exists() and _log_complete(log_path):
                    manifest_rows.append(
                        {"run_id": run_id, "log": str(log_path), "status": "complete"}
                    )
                    continue
                tasks.append(
                    {
                        "settings": {
                            "benchmark": args.benchmark,
                            "optimizer": optimizer,
                            "scenario": args.scenario,
                            "hardware": args.hardware or "mid",
                            "budget": budget,
                            "seed": seed,
                            "out": str(out_dir),
                            "evaluator": None,
                            "timeout_multiplier": 5.0,
                            "timeout_enabled": True,
                            "anneal": {},
                            "tpe": {},
                        }
                    }
                )

    if args.workers > 1 and tasks:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            manifest_rows.extend(pool.map(_sweep_task, tasks))
    else:
        for task in tasks:
            manifest_rows.append(_sweep_task(task))

    manifest_rows.sort(key=lambda r: r["run_id"])
    manifest = {
        "benchmark": args.benchmark,
        "scenario": scenario_name,
        "optimizers": optimizers,
        "budgets": budgets,
        "seeds": seeds,
        "runs": manifest_rows,
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
    )
    incomplete = [r for r in manifest_rows if r["status"] != "complete"]
    print(f"sweep: {len(manifest_rows)} runs, {len(incomplete)} incomplete; manifest in {out_dir}")
    return 1 if incomplete else 0


def _log_complete(path: Path) -> bool:
    try:
        record, _ = replay(path)
    except Exception:
        return False
    return record.complete


def _parse_seeds(text: str, parser: argparse.ArgumentParser) -> list[int]:
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        parser.error(f"cannot parse seeds {text!r}")
        return []


# ---------------------------------------------------------------------------
# report

def cmd_report(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    runs = collect_runs(args.logs, allow_mixed=args.allow_mixed)
    out_dir = args.out or str(Path(args.logs) / "report")
    written = write_report(
        runs,
        out_dir,
        fmt=args.format,
        family=args.family,
        compute_oracle=not args.no_oracle,
    )
    for path in written:
        print(path)
    return 0


# ---------------------------------------------------------------------------
# calibrate

def cmd_calibrate(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    if args.samples < 1:
        parser.error("--samples must be >= 1")
    if args.benchmark not in BENCHMARK_NAMES:
        parser.error(f"unknown benchmark {args.benchmark!r}; choose from {BENCHMARK_NAMES}")
    bench = get_benchmark(args.benchmark)
    scenario = bench.scenario(args.scenario)
    hw = bench.constants.profile(args.hardware or "mid")
    rng = np.random.default_rng(args.seed)
    crash, infeasible, combined = calibration_rates(bench, scenario, hw, args.samples, rng)
    lo, hi = bench.invalidity_band
    verdict = "pass" if lo <= combined <= hi else "fail"
    print(f"benchmark={bench.name} scenario={scenario.name} hardware={hw.name} samples={args.samples}")
    print(f"crash_rate={crash:.4f}")
    print(f"infeasible_rate={infeasible:.4f}")
    print(f"combined_invalidity={combined:.4f}")
    print(f"target_band=[{lo}, {hi}] -> {verdict}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
