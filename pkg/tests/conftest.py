from __future__ import annotations

import numpy as np
import pytest

from crashopt.benchmarks import (
    MAXIMIZE_NEGATED,
    OK,
    Benchmark,
    ConstraintSpec,
    HardwareProfile,
    RawOutcome,
    Scenario,
    default_constants,
    get_benchmark,
)
from crashopt.evaluator import InProcessEvaluator
from crashopt.space import CONTINUOUS, SearchSpace, VariableSpec


@pytest.fixture(scope="session")
def constants():
    return default_constants()


@pytest.fixture(scope="session")
def branin_bench():
    return get_benchmark("crashy_branin")


@pytest.fixture(scope="session")
def rosen_bench():
    return get_benchmark("hier_rosenbrock")


@pytest.fixture(scope="session")
def deploy_bench():
    return get_benchmark("sim_deploy")


@pytest.fixture(scope="session")
def mid_profile(constants):
    return constants.profile("mid")


def make_evaluator(bench, scenario_name=None, profile="mid", policy=None):
    scenario = bench.scenario(scenario_name)
    hw = bench.constants.profile(profile)
    return InProcessEvaluator(bench, scenario, hw, policy)


def rng(seed=0):
    return np.random.default_rng(seed)


class QuadraticBench(Benchmark):
    """Crash-free single-variable benchmark with an always-satisfied
    constraint; optimum 0 at x = 1.3."""

    name = "quadratic1d"

    def __init__(self):
        super().__init__(default_constants())
        self.space = SearchSpace(
            "quadratic1d", (VariableSpec("x", CONTINUOUS, (-5.0, 5.0)),)
        )
        self.scenarios = {
            "default": Scenario(
                "default", (ConstraintSpec("slack", 1.0),), MAXIMIZE_NEGATED, budget=50
            )
        }
        self.default_scenario_name = "default"

    def _evaluate(self, config, scenario, hw):
        x = config["x"]
        return RawOutcome(OK, -((x - 1.3) ** 2), {"slack": 0.0}, 0.5)


class AllCrashBench(Benchmark):
    """Every configuration crashes."""

    name = "allcrash"

    def __init__(self):
        super().__init__(default_constants())
        self.space = SearchSpace(
            "allcrash", (VariableSpec("x", CONTINUOUS, (0.0, 1.0)),)
        )
        self.scenarios = {
            "default": Scenario(
                "default", (ConstraintSpec("slack", 1.0),), MAXIMIZE_NEGATED, budget=10
            )
        }
        self.default_scenario_name = "default"

    def _evaluate(self, config, scenario, hw):
        return RawOutcome("crash", None, None, 1.0, crash_reason="always")


@pytest.fixture()
def quadratic_bench():
    return QuadraticBench()


@pytest.fixture()
def allcrash_bench():
    return AllCrashBench()


@pytest.fixture()
def test_profile():
    return HardwareProfile("mid", 1.0)
