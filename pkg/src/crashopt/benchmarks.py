"""Synthetic crash-heavy benchmarks: Crashy Branin, Hierarchical Rosenbrock,
and a simulated deployment task over the model/backend/quantization space.

Every benchmark is a deterministic pure function of (configuration, scenario,
hardware profile) and the shipped constants file. Outcomes partition into
crash, valid-but-infeasible, and feasible; crashes carry no objective but
always cost time. Constants the literature does not publish (crash-zone
geometry, pseudo-latency tables, costs) live in data/benchmark_constants.json
and were calibrated by Monte Carlo so Crashy Branin lands at ~65% combined
invalidity under uniform sampling.

The simulated deployment arithmetic deliberately uses only +,-,*,/ on IEEE
doubles, in a documented operation order, so an out-of-process evaluator in
another language can reproduce outcomes bit-for-bit from the same constants
file (see docs/wire_protocol.md).
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterator, Mapping

import numpy as np

from .errors import SpecificationError
from .space import (
    CONTINUOUS,
    Config,
    SearchSpace,
    crashy_branin_space,
    deployment_space,
    hier_rosenbrock_space,
    iter_discrete_configs,
    require_valid,
    sample_uniform,
)

OK = "ok"
CRASH = "crash"

MAXIMIZE_ACCURACY = "maximize-accuracy"
MAXIMIZE_THROUGHPUT = "maximize-throughput"
MAXIMIZE_NEGATED = "maximize-negated-function"
_OBJECTIVE_KINDS = (MAXIMIZE_ACCURACY, MAXIMIZE_THROUGHPUT, MAXIMIZE_NEGATED)


@dataclass(frozen=True)
class ConstraintSpec:
    """Upper-bound constraint g(x) <= threshold."""

    name: str
    threshold: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.threshold):
            raise SpecificationError(f"constraint {self.name}: non-finite threshold")


@dataclass(frozen=True)
class Scenario:
    name: str
    constraints: tuple[ConstraintSpec, ...]
    objective_kind: str
    budget: int = 25

    def __post_init__(self) -> None:
        if self.budget < 1:
            raise SpecificationError(f"scenario {self.name}: budget must be >= 1")
        if not self.constraints:
            raise SpecificationError(f"scenario {self.name}: at least one constraint required")
        names = [c.name for c in self.constraints]
        if len(set(names)) != len(names):
            raise SpecificationError(f"scenario {self.name}: duplicate constraint names")
        if self.objective_kind not in _OBJECTIVE_KINDS:
            raise SpecificationError(f"scenario {self.name}: unknown objective kind")

    def latency_constraint(self) -> ConstraintSpec | None:
        """First constraint whose name starts with 'latency' (drives timeouts)."""
        for c in self.constraints:
            if c.name.startswith("latency"):
                return c
        return None

    def to_wire(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "objective_kind": self.objective_kind,
            "constraints": [{"name": c.name, "threshold": c.threshold} for c in self.constraints],
        }

    @staticmethod
    def from_wire(doc: Mapping[str, Any], budget: int = 25) -> "Scenario":
        return Scenario(
            name=doc["name"],
            constraints=tuple(
                ConstraintSpec(c["name"], float(c["threshold"])) for c in doc["constraints"]
            ),
            objective_kind=doc["objective_kind"],
            budget=budget,
        )


@dataclass(frozen=True)
class RawOutcome:
    """One benchmark evaluation before any trial-level policy is applied."""

    status: str
    objective: float | None
    constraint_values: dict[str, float] | None
    true_cost_seconds: float
    crash_reason: str | None = None

    def __post_init__(self) -> None:
        if self.status == CRASH:
            if self.objective is not None or self.constraint_values is not None:
                raise SpecificationError("crash outcomes carry no objective or constraints")
        elif self.status == OK:
            if self.objective is None or self.constraint_values is None:
                raise SpecificationError("ok outcomes need objective and constraint values")
        else:
            raise SpecificationError(f"unknown outcome status {self.status!r}")
        if not self.true_cost_seconds > 0:
            raise SpecificationError("evaluations always cost time")


@dataclass(frozen=True)
class HardwareProfile:
    """Emulated hardware target; the multiplier scales all simulated latencies."""

    name: str
    speed_multiplier: float

    def __post_init__(self) -> None:
        if not self.speed_multiplier > 0:
            raise SpecificationError("speed_multiplier must be positive")


# ---------------------------------------------------------------------------
# Constants file

_DEFAULT_CONSTANTS_PATH = Path(__file__).parent / "data" / "benchmark_constants.json"


@dataclass(frozen=True)
class BenchmarkConstants:
    """Parsed constants document plus the content hash recorded in run logs."""

    data: Mapping[str, Any]
    sha256: str
    path: Path

    @property
    def version(self) -> int:
        return int(self.data["version"])

    def profile(self, name: str) -> HardwareProfile:
        try:
            entry = self.data["profiles"][name]
        except KeyError:
            raise SpecificationError(f"unknown hardware profile {name!r}") from None
        return HardwareProfile(name=name, speed_multiplier=float(entry["speed_multiplier"]))

    def profile_names(self) -> tuple[str, ...]:
        return tuple(self.data["profiles"])

    def oom_mb(self, profile_name: str) -> float:
        entry = self.data["profiles"].get(profile_name)
        if entry is None or "oom_mb" not in entry:
            return math.inf
        return float(entry["oom_mb"])

    @property
    def warmup_fraction(self) -> float:
        t = self.data["timeout"]
        return t["warmup_iters"] / t["total_iters"]


def load_constants(path: str | Path | None = None) -> BenchmarkConstants:
    p = Path(path) if path is not None else _DEFAULT_CONSTANTS_PATH
    raw = p.read_bytes()
    return BenchmarkConstants(
        data=json.loads(raw.decode("utf-8")),
        sha256=hashlib.sha256(raw).hexdigest(),
        path=p,
    )


_default_constants: BenchmarkConstants | None = None


def default_constants() -> BenchmarkConstants:
    global _default_constants
    if _default_constants is None:
        _default_constants = load_constants()
    return _default_constants


def default_profile(name: str = "mid") -> HardwareProfile:
    return default_constants().profile(name)


# ---------------------------------------------------------------------------
# Benchmarks

class Benchmark:
    """Deterministic evaluator over a search space, with named scenarios."""

    name: str
    space: SearchSpace
    scenarios: dict[str, Scenario]
    default_scenario_name: str

    def __init__(self, constants: BenchmarkConstants | None = None):
        self.constants = constants if constants is not None else default_constants()

    def scenario(self, name: str | None = None) -> Scenario:
        key = name if name is not None else self.default_scenario_name
        try:
            return self.scenarios[key]
        except KeyError:
            raise SpecificationError(
                f"benchmark {self.name}: unknown scenario {key!r} "
                f"(known: {sorted(self.scenarios)})"
            ) from None

    @property
    def invalidity_band(self) -> tuple[float, float]:
        lo, hi = self.constants.data[self.name]["invalidity_band"]
        return float(lo), float(hi)

    def evaluate(
        self,
        config: Config,
        scenario: Scenario | None = None,
        hw: HardwareProfile | None = None,
    ) -> RawOutcome:
        scenario = scenario if scenario is not None else self.scenario()
        hw = hw if hw is not None else self.constants.profile("mid")
        require_valid(self.space, config)
        return self._evaluate(config, scenario, hw)

    def evaluate_sampled(
        self, config: Config, scenario: Scenario, hw: HardwareProfile
    ) -> RawOutcome:
        """Evaluation path for configs that are valid by construction
        (oracle enumeration, uniform sampling); skips re-validation."""
        return self._evaluate(config, scenario, hw)

    def _evaluate(self, config: Config, scenario: Scenario, hw: HardwareProfile) -> RawOutcome:
        raise NotImplementedError

    def _constraints_from_metrics(
        self, metrics: Mapping[str, float], scenario: Scenario
    ) -> dict[str, float]:
        values = {}
        for c in scenario.constraints:
            if c.name not in metrics:
                raise SpecificationError(
                    f"benchmark {self.name}: scenario constraint {c.name!r} "
                    f"has no metric (known: {sorted(metrics)})"
                )
            values[c.name] = metrics[c.name]
        return values


class CrashyBranin(Benchmark):
    """Negated Branin with a mode offset, rectangular crash zones, and a
    pseudo-latency constraint increasing in resolution and x2."""

    name = "crashy_branin"

    def __init__(self, constants: BenchmarkConstants | None = None):
        super().__init__(constants)
        self.space = crashy_branin_space()
        self._c = self.constants.data[self.name]
        threshold = float(self._c["latency_threshold_ms"])
        self.scenarios = {
            "default": Scenario(
                name="default",
                constraints=(ConstraintSpec("latency_ms", threshold),),
                objective_kind=MAXIMIZE_NEGATED,
            )
        }
        self.default_scenario_name = "default"

    def _evaluate(self, config: Config, scenario: Scenario, hw: HardwareProfile) -> RawOutcome:
        mode = config["mode"]
        r = config["resolution"]
        x1 = config["x1"]
        x2 = config["x2"]
        for zone in self._c["crash_zones"]:
            if _zone_matches(zone, mode, x1, x2):
                cost = self._c["cost_crash_base_s"] + self._c["cost_crash_per_r_s"] * r
                return RawOutcome(CRASH, None, None, cost, crash_reason="crash_zone")
        objective = -_branin(x1, x2) + self._c["mode_offsets"][mode]
        # flat below the x2 knee, then growing with resolution x excess height
        excess = max(0.0, x2 - self._c["latency_knee"])
        latency = (self._c["latency_base"] + self._c["latency_slope"] * r * excess) * hw.speed_multiplier
        cost = self._c["cost_ok_base_s"] + self._c["cost_ok_per_r2_s"] * r * r
        metrics = {"latency_ms": latency}
        return RawOutcome(OK, objective, self._constraints_from_metrics(metrics, scenario), cost)


def _branin(x1: float, x2: float) -> float:
    b = 5.1 / (4.0 * math.pi * math.pi)
    c = 5.0 / math.pi
    t = 1.0 / (8.0 * math.pi)
    return (x2 - b * x1 * x1 + c * x1 - 6.0) ** 2 + 10.0 * (1.0 - t) * math.cos(x1) + 10.0


def _zone_matches(zone: Mapping[str, Any], mode: str, x1: float, x2: float) -> bool:
    if "modes" in zone and mode not in zone["modes"]:
        return False
    if "x1" in zone and not (zone["x1"][0] <= x1 <= zone["x1"][1]):
        return False
    if "x2" in zone and not (zone["x2"][0] <= x2 <= zone["x2"][1]):
        return False
    return True


class HierRosenbrock(Benchmark):
    """Negated Rosenbrock over mode-activated coordinates; higher-dimensional
    modes crash closer to the box edge, so hostility grows with dimension."""

    name = "hier_rosenbrock"

    _DIMS = {"m2": 2, "m4": 4, "m6": 6}

    def __init__(self, constants: BenchmarkConstants | None = None):
        super().__init__(constants)
        self.space = hier_rosenbrock_space()
        self._c = self.constants.data[self.name]
        threshold = float(self._c["latency_threshold_ms"])
        self.scenarios = {
            "default": Scenario(
                name="default",
                constraints=(ConstraintSpec("latency_ms", threshold),),
                objective_kind=MAXIMIZE_NEGATED,
            )
        }
        self.default_scenario_name = "default"

    def _evaluate(self, config: Config, scenario: Scenario, hw: HardwareProfile) -> RawOutcome:
        mode = config["mode"]
        d = self._DIMS[mode]
        xs = [config[f"x{i}"] for i in range(1, d + 1)]
        band = self._c["crash_band_x1"]
        crashed = band[0] <= xs[0] <= band[1]
        if not crashed:
            edge = self._c["crash_edge"][mode]
            crashed = any(abs(x) > edge for x in xs)
        if crashed:
            return RawOutcome(
                CRASH, None, None, self._c["cost_crash_s"], crash_reason="crash_zone"
            )
        rosen = 0.0
        for i in range(d - 1):
            rosen += 100.0 * (xs[i + 1] - xs[i] * xs[i]) ** 2 + (1.0 - xs[i]) ** 2
        latency = (self._c["latency_offset"] + sum(x * x for x in xs)) * hw.speed_multiplier
        cost = self._c["cost_ok_base_s"] + self._c["cost_ok_per_dim_s"] * d
        metrics = {"latency_ms": latency}
        return RawOutcome(OK, -rosen, self._constraints_from_metrics(metrics, scenario), cost)


class SimDeploy(Benchmark):
    """Analytic stand-in for real GPU deployment measurement.

    Latency/memory/cost come from lookup tables scaled by pure arithmetic;
    accuracy is a per-model constant minus a quantization penalty. Crash
    rules: declared onnxruntime model/precision incompatibilities (a
    stand-in list; the real set is unpublished) and out-of-memory against
    the profile's cap. Operation order is part of the contract; the
    reference worker replays it exactly.
    """

    name = "sim_deploy"

    def __init__(self, constants: BenchmarkConstants | None = None):
        super().__init__(constants)
        self.space = deployment_space()
        self._c = self.constants.data[self.name]
        self._incompatible = {tuple(pair) for pair in self._c["onnx_incompatible"]}
        self.scenarios = {
            "edge_tight": Scenario(
                name="edge_tight",
                constraints=(
                    ConstraintSpec("latency_p95", 20.0),
                    ConstraintSpec("memory_mb", 512.0),
                ),
                objective_kind=MAXIMIZE_ACCURACY,
            ),
            "server_throughput": Scenario(
                name="server_throughput",
                constraints=(
                    ConstraintSpec("latency_p99", 100.0),
                    ConstraintSpec("memory_mb", 4096.0),
                ),
                objective_kind=MAXIMIZE_THROUGHPUT,
            ),
        }
        self.default_scenario_name = "edge_tight"

    def _evaluate(self, config: Config, scenario: Scenario, hw: HardwareProfile) -> RawOutcome:
        c = self._c
        model = config["model_name"]
        backend = config["backend"]
        quant = config["quantization"]
        batch = config["batch_size"]

        if backend == "onnxruntime" and (model, quant) in self._incompatible:
            cost = c["load_s"][model] + c["onnx_fail_s"]
            return RawOutcome(CRASH, None, None, cost, crash_reason="onnx_incompatible")

        mem = c["base_memory_mb"][model] * c["batch_memory_factor"][str(batch)]
        if mem > self.constants.oom_mb(hw.name):
            cost = c["load_s"][model] + c["compile_s"][backend] + c["oom_fail_s"]
            return RawOutcome(CRASH, None, None, cost, crash_reason="oom")

        lat = c["base_latency_ms"][model][backend]
        lat = lat * c["batch_latency_factor"][str(batch)]
        lat = lat * c["quant_latency_factor"][quant]
        lat = lat * hw.speed_multiplier
        threads = config.get("num_threads")
        if threads is not None:
            te = c["thread_effect"]
            lat = lat * (1.0 + te["span"] * ((te["center"] - threads) / te["half_range"]))

        p99 = lat * c["p99_over_p95"]
        lat_mean = lat / c["p95_over_mean"]
        throughput = batch / (lat_mean / 1000.0)
        accuracy = c["accuracy"][model] - c["quant_accuracy_penalty"][quant]

        cost = c["load_s"][model] + c["compile_s"][backend]
        cost = cost + self.constants.data["timeout"]["total_iters"] * (lat / 1000.0)
        cost = cost + c["accuracy_eval_s"]

        metrics = {
            "latency_p95": lat,
            "latency_p99": p99,
            "memory_mb": mem,
            "throughput": throughput,
            "accuracy": accuracy,
        }
        if scenario.objective_kind == MAXIMIZE_ACCURACY:
            objective = accuracy
        elif scenario.objective_kind == MAXIMIZE_THROUGHPUT:
            objective = throughput
        else:
            raise SpecificationError(f"sim_deploy cannot serve {scenario.objective_kind}")
        return RawOutcome(OK, objective, self._constraints_from_metrics(metrics, scenario), cost)


# ---------------------------------------------------------------------------
# Registry and module-level evaluate functions

BENCHMARK_NAMES = ("crashy_branin", "hier_rosenbrock", "sim_deploy")
_CLASSES = {"crashy_branin": CrashyBranin, "hier_rosenbrock": HierRosenbrock, "sim_deploy": SimDeploy}
_instances: dict[tuple[str, str], Benchmark] = {}


def get_benchmark(name: str, constants: BenchmarkConstants | None = None) -> Benchmark:
    if name not in _CLASSES:
        raise SpecificationError(f"unknown benchmark {name!r} (known: {BENCHMARK_NAMES})")
    constants = constants if constants is not None else default_constants()
    key = (name, constants.sha256)
    if key not in _instances:
        _instances[key] = _CLASSES[name](constants)
    return _instances[key]


def evaluate_crashy_branin(
    config: Config, scenario: Scenario | None = None, hw: HardwareProfile | None = None
) -> RawOutcome:
    return get_benchmark("crashy_branin").evaluate(config, scenario, hw)


def evaluate_hier_rosenbrock(
    config: Config, scenario: Scenario | None = None, hw: HardwareProfile | None = None
) -> RawOutcome:
    return get_benchmark("hier_rosenbrock").evaluate(config, scenario, hw)


def evaluate_sim_deploy(
    config: Config, scenario: Scenario | None = None, hw: HardwareProfile | None = None
) -> RawOutcome:
    return get_benchmark("sim_deploy").evaluate(config, scenario, hw)


# ---------------------------------------------------------------------------
# Oracles

def invalidity_rate(
    benchmark: Benchmark,
    scenario: Scenario,
    hw: HardwareProfile,
    n_samples: int,
    rng: np.random.Generator,
) -> float:
    """Monte-Carlo P(crash or any constraint violated) under uniform sampling."""
    if n_samples < 1:
        raise SpecificationError("n_samples must be >= 1")
    thresholds = {c.name: c.threshold for c in scenario.constraints}
    invalid = 0
    for _ in range(n_samples):
        config = sample_uniform(benchmark.space, rng)
        outcome = benchmark.evaluate_sampled(config, scenario, hw)
        if outcome.status == CRASH:
            invalid += 1
            continue
        values = outcome.constraint_values or {}
        if any(values[name] > bound for name, bound in thresholds.items()):
            invalid += 1
    return invalid / n_samples


def calibration_rates(
    benchmark: Benchmark,
    scenario: Scenario,
    hw: HardwareProfile,
    n_samples: int,
    rng: np.random.Generator,
) -> tuple[float, float, float]:
    """(crash rate, infeasible rate, combined invalidity) under uniform
    sampling; the combined value is what invalidity_rate reports."""
    if n_samples < 1:
        raise SpecificationError("n_samples must be >= 1")
    thresholds = {c.name: c.threshold for c in scenario.constraints}
    crashes = infeasible = 0
    for _ in range(n_samples):
        config = sample_uniform(benchmark.space, rng)
        outcome = benchmark.evaluate_sampled(config, scenario, hw)
        if outcome.status == CRASH:
            crashes += 1
        elif any(outcome.constraint_values[name] > bound for name, bound in thresholds.items()):
            infeasible += 1
    return crashes / n_samples, infeasible / n_samples, (crashes + infeasible) / n_samples


@dataclass(frozen=True)
class GlobalOptimum:
    """Brute-force best feasible point; `found` is False for infeasible setups."""

    found: bool
    config: Config | None = None
    value: float | None = None


def _grid_counts(n_continuous: int) -> int:
    # Grid density backs off with active dimensionality so the oracle stays
    # tractable; every shipped space keeps the true minimizer on-grid.
    if n_continuous <= 2:
        return 201
    if n_continuous == 3:
        return 61
    if n_continuous == 4:
        return 21
    return 9


def global_optimum(
    benchmark: Benchmark,
    scenario: Scenario | None = None,
    hw: HardwareProfile | None = None,
    grid_points: int | None = None,
) -> GlobalOptimum:
    """Exhaustively enumerate discrete combinations crossed with a dense grid
    over active continuous axes; return the best feasible, non-crashing point."""
    scenario = scenario if scenario is not None else benchmark.scenario()
    hw = hw if hw is not None else benchmark.constants.profile("mid")
    space = benchmark.space
    thresholds = {c.name: c.threshold for c in scenario.constraints}

    best_config: Config | None = None
    best_value = -math.inf

    def consider(config: Config) -> None:
        nonlocal best_config, best_value
        outcome = benchmark.evaluate_sampled(config, scenario, hw)
        if outcome.status != OK:
            return
        values = outcome.constraint_values or {}
        if any(values[name] > bound for name, bound in thresholds.items()):
            return
        if outcome.objective > best_value:
            best_value = outcome.objective
            best_config = dict(config)

    for partial in _discrete_assignments(space):
        axes = [
            v for v in space.variables if v.kind == CONTINUOUS and v.active_under(partial)
        ]
        if not axes:
            consider(partial)
            continue
        k = grid_points if grid_points is not None else _grid_counts(len(axes))
        grids = [np.linspace(v.domain[0], v.domain[1], k) for v in axes]
        for point in _cartesian(grids):
            config = dict(partial)
            for v, value in zip(axes, point):
                config[v.name] = float(value)
            consider(config)

    if best_config is None:
        return GlobalOptimum(found=False)
    return GlobalOptimum(found=True, config=best_config, value=best_value)


def _discrete_assignments(space: SearchSpace) -> Iterator[Config]:
    """All assignments of the discrete variables, honoring activation among
    them (continuous variables do not gate anything in the shipped spaces)."""
    discrete = tuple(v for v in space.variables if v.kind != CONTINUOUS)
    if not discrete:
        yield {}
        return
    skeleton = SearchSpace(name=space.name + "_skel", variables=discrete)
    yield from iter_discrete_configs(skeleton)


def _cartesian(grids: list[np.ndarray]) -> Iterator[tuple[float, ...]]:
    if len(grids) == 1:
        for a in grids[0]:
            yield (a,)
        return
    import itertools

    yield from itertools.product(*grids)
