from __future__ import annotations

import math

import numpy as np
import pytest

from crashopt.benchmarks import (
    CRASH,
    OK,
    ConstraintSpec,
    GlobalOptimum,
    Scenario,
    calibration_rates,
    default_constants,
    global_optimum,
    invalidity_rate,
)
from crashopt.errors import SpecificationError
from crashopt.space import sample_uniform

from conftest import QuadraticBench, rng


def branin_reference(x1, x2):
    # Independent oracle for the standard Branin surface.
    b = 5.1 / (4 * math.pi**2)
    c = 5 / math.pi
    t = 1 / (8 * math.pi)
    return (x2 - b * x1**2 + c * x1 - 6) ** 2 + 10 * (1 - t) * math.cos(x1) + 10


def test_branin_minimum_against_dense_grid():
    # Freeze the expected optimum from the reference surface before trusting
    # the benchmark: dense grid around the known minimizer.
    xs = np.linspace(2.9, 3.4, 501)
    ys = np.linspace(2.0, 2.6, 501)
    best = min(branin_reference(a, b) for a in xs for b in ys)
    assert abs(best - 0.397887) < 1e-3


def test_branin_minimizer_value(branin_bench, mid_profile):
    config = {"mode": "A", "resolution": 1, "x1": math.pi, "x2": 2.275}
    outcome = branin_bench.evaluate(config, branin_bench.scenario(), mid_profile)
    assert outcome.status == OK
    assert outcome.objective == pytest.approx(-0.397887, abs=1e-4)


def test_crash_zone_returns_crash_without_objective(branin_bench, mid_profile):
    config = {"mode": "A", "resolution": 1, "x1": -4.5, "x2": 1.0}
    outcome = branin_bench.evaluate(config, branin_bench.scenario(), mid_profile)
    assert outcome.status == CRASH
    assert outcome.objective is None and outcome.constraint_values is None
    assert outcome.true_cost_seconds > 0


def test_mode_pocket_zone_is_mode_specific(branin_bench, mid_profile):
    in_zone = {"mode": "C", "resolution": 1, "x1": 7.0, "x2": 5.0}
    out_zone = {"mode": "A", "resolution": 1, "x1": 7.0, "x2": 5.0}
    assert branin_bench.evaluate(in_zone).status == CRASH
    assert branin_bench.evaluate(out_zone).status == OK


def test_branin_determinism_bit_for_bit(branin_bench, mid_profile):
    r = rng(1)
    scenario = branin_bench.scenario()
    for _ in range(200):
        config = sample_uniform(branin_bench.space, r)
        a = branin_bench.evaluate(config, scenario, mid_profile)
        b = branin_bench.evaluate(config, scenario, mid_profile)
        assert a == b


def test_outcome_partition(branin_bench, deploy_bench, rosen_bench, mid_profile):
    r = rng(2)
    for bench in (branin_bench, deploy_bench, rosen_bench):
        scenario = bench.scenario()
        for _ in range(500):
            config = sample_uniform(bench.space, r)
            outcome = bench.evaluate_sampled(config, scenario, mid_profile)
            if outcome.status == CRASH:
                continue
            v = sum(
                max(0.0, outcome.constraint_values[c.name] - c.threshold)
                for c in scenario.constraints
            )
            assert v >= 0.0  # exactly one bucket: ok(V>0) or ok(V=0)


def test_invalid_config_raises(branin_bench):
    with pytest.raises(SpecificationError):
        branin_bench.evaluate({"mode": "A", "resolution": 99, "x1": 0.0, "x2": 0.0})


def test_crashy_branin_invalidity_band(branin_bench, mid_profile):
    rate = invalidity_rate(
        branin_bench, branin_bench.scenario(), mid_profile, 20_000, rng(5)
    )
    assert 0.60 <= rate <= 0.70


def test_invalidity_rate_zero_for_benign_benchmark(test_profile):
    bench = QuadraticBench()
    rate = invalidity_rate(bench, bench.scenario(), test_profile, 2_000, rng(6))
    assert rate == 0.0


def test_sim_deploy_hostility_increases_on_slow_profile(deploy_bench, constants):
    scenario = deploy_bench.scenario("edge_tight")
    fast = invalidity_rate(deploy_bench, scenario, constants.profile("fast"), 20_000, rng(7))
    slow = invalidity_rate(deploy_bench, scenario, constants.profile("slow"), 20_000, rng(7))
    assert slow > fast


def test_calibration_rates_sum(branin_bench, mid_profile):
    crash, infeasible, combined = calibration_rates(
        branin_bench, branin_bench.scenario(), mid_profile, 5_000, rng(8)
    )
    assert combined == pytest.approx(crash + infeasible)


def test_rosenbrock_minimizer_is_zero(rosen_bench, mid_profile):
    config = {"mode": "m2", "x1": 1.0, "x2": 1.0}
    outcome = rosen_bench.evaluate(config)
    assert outcome.status == OK
    assert outcome.objective == 0.0


@pytest.mark.parametrize("mode,dim", [("m2", 2), ("m4", 4), ("m6", 6)])
def test_rosenbrock_effective_dimensionality(rosen_bench, mode, dim):
    r = rng(9)
    config = sample_uniform(rosen_bench.space, r)
    config = {k: v for k, v in config.items() if k == "mode" or k.startswith("x")}
    config["mode"] = mode
    active = {f"x{i}" for i in range(1, dim + 1)} | {"mode"}
    full = {"mode": mode}
    for i in range(1, dim + 1):
        full[f"x{i}"] = 0.5
    outcome = rosen_bench.evaluate(full)
    assert set(full) == active
    assert outcome.status == OK


def test_rosenbrock_m6_edge_crash(rosen_bench):
    config = {"mode": "m6", "x1": 0.0, "x2": 0.0, "x3": 0.0, "x4": 0.0, "x5": 1.9, "x6": 0.0}
    assert rosen_bench.evaluate(config).status == CRASH
    config["x5"] = 1.5
    assert rosen_bench.evaluate(config).status == OK


def test_sim_deploy_accuracy_constants(deploy_bench, constants):
    expected = {
        "vit_tiny": 0.766,
        "resnet50": 0.746,
        "efficientnet_b0": 0.742,
        "resnet18": 0.720,
        "mobilenet_v2": 0.718,
    }
    hw = constants.profile("fast")
    for model, accuracy in expected.items():
        config = {
            "model_name": model,
            "backend": "pytorch_eager",
            "quantization": "fp32",
            "batch_size": 1,
            "num_threads": 4,
        }
        outcome = deploy_bench.evaluate(config, deploy_bench.scenario("edge_tight"), hw)
        assert outcome.status == OK
        assert outcome.objective == pytest.approx(accuracy, abs=1e-12)


def test_sim_deploy_accuracy_ordering(deploy_bench, constants):
    order = ["vit_tiny", "resnet50", "efficientnet_b0", "resnet18", "mobilenet_v2"]
    acc = constants.data["sim_deploy"]["accuracy"]
    penalties = constants.data["sim_deploy"]["quant_accuracy_penalty"]
    for quant in ("fp32", "fp16"):
        values = [acc[m] - penalties[quant] for m in order]
        assert values == sorted(values, reverse=True)


def test_int8_exceeds_25x_edge_threshold_on_slow(deploy_bench, constants):
    hw = constants.profile("slow")
    scenario = deploy_bench.scenario("edge_tight")
    for model in ("vit_tiny", "resnet18", "resnet50", "mobilenet_v2", "efficientnet_b0"):
        for backend in ("pytorch_eager", "torch_compile", "onnxruntime"):
            config = {
                "model_name": model,
                "backend": backend,
                "quantization": "int8_dynamic",
                "batch_size": 1,
            }
            if backend != "torch_compile":
                config["num_threads"] = 8
            outcome = deploy_bench.evaluate(config, scenario, hw)
            if outcome.status == CRASH:
                continue
            assert outcome.constraint_values["latency_p95"] >= 25 * 20.0


def test_vit_tiny_meets_20ms_for_all_batches_on_fast(deploy_bench, constants):
    hw = constants.profile("fast")
    scenario = deploy_bench.scenario("edge_tight")
    for quant in ("fp32", "fp16"):
        for backend in ("pytorch_eager", "torch_compile", "onnxruntime"):
            for batch in (1, 2, 4, 8, 16, 32):
                for threads in (1, 8):
                    config = {
                        "model_name": "vit_tiny",
                        "backend": backend,
                        "quantization": quant,
                        "batch_size": batch,
                    }
                    if backend != "torch_compile":
                        config["num_threads"] = threads
                    outcome = deploy_bench.evaluate(config, scenario, hw)
                    if outcome.status == CRASH:
                        continue  # onnx incompatibility bucket
                    assert outcome.constraint_values["latency_p95"] <= 20.0


def test_onnx_incompatibility_crashes(deploy_bench):
    config = {
        "model_name": "vit_tiny",
        "backend": "onnxruntime",
        "quantization": "fp16",
        "batch_size": 1,
        "num_threads": 1,
    }
    outcome = deploy_bench.evaluate(config)
    assert outcome.status == CRASH and outcome.crash_reason == "onnx_incompatible"


def test_resnet50_large_batch_oom_on_slow(deploy_bench, constants):
    config = {
        "model_name": "resnet50",
        "backend": "pytorch_eager",
        "quantization": "fp32",
        "batch_size": 16,
        "num_threads": 4,
    }
    slow = deploy_bench.evaluate(config, deploy_bench.scenario("edge_tight"), constants.profile("slow"))
    fast = deploy_bench.evaluate(config, deploy_bench.scenario("edge_tight"), constants.profile("fast"))
    assert slow.status == CRASH and slow.crash_reason == "oom"
    assert fast.status == OK


def test_num_threads_latency_effect_within_5pct(deploy_bench, mid_profile):
    scenario = deploy_bench.scenario("edge_tight")
    tables = deploy_bench.constants.data["sim_deploy"]
    base = tables["base_latency_ms"]["resnet18"]["pytorch_eager"] * tables["batch_latency_factor"]["4"]
    for threads in range(1, 9):
        config = {
            "model_name": "resnet18",
            "backend": "pytorch_eager",
            "quantization": "fp32",
            "batch_size": 4,
            "num_threads": threads,
        }
        latency = deploy_bench.evaluate(config, scenario, mid_profile).constraint_values["latency_p95"]
        assert abs(latency - base) <= 0.05 * base + 1e-9


@pytest.mark.parametrize("name", ["crashy_branin", "hier_rosenbrock", "sim_deploy"])
def test_cost_asymmetry_at_least_10x(name, mid_profile, branin_bench, rosen_bench, deploy_bench):
    bench = {"crashy_branin": branin_bench, "hier_rosenbrock": rosen_bench, "sim_deploy": deploy_bench}[name]
    r = rng(13)
    scenario = bench.scenario()
    costs = [
        bench.evaluate_sampled(sample_uniform(bench.space, r), scenario, mid_profile).true_cost_seconds
        for _ in range(2_000)
    ]
    assert max(costs) >= 10 * min(costs)


def test_global_optimum_on_fast_profile_is_vit(deploy_bench, constants):
    optimum = global_optimum(
        deploy_bench, deploy_bench.scenario("edge_tight"), constants.profile("fast")
    )
    assert optimum.found
    assert optimum.config["model_name"] == "vit_tiny"
    assert optimum.value == pytest.approx(0.766)


def test_global_optimum_rosenbrock_exact(rosen_bench, mid_profile):
    optimum = global_optimum(rosen_bench, rosen_bench.scenario(), mid_profile)
    assert optimum.found
    assert optimum.value == 0.0


def test_global_optimum_infeasible_scenario(branin_bench, mid_profile):
    impossible = Scenario(
        "impossible",
        (ConstraintSpec("latency_ms", 0.001),),
        "maximize-negated-function",
    )
    optimum = global_optimum(branin_bench, impossible, mid_profile, grid_points=41)
    assert optimum == GlobalOptimum(found=False)


def test_constants_hash_stable(constants):
    again = default_constants()
    assert constants.sha256 == again.sha256
    assert len(constants.sha256) == 64
