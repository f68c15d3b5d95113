"""Hierarchical mixed-variable search spaces.

A space is an ordered list of variables. Each variable is categorical
(optionally ordered, with a numeric payload such as batch sizes), integer,
or continuous, and may carry an activation condition: a conjunction of
membership tests over variables declared earlier. A configuration assigns
values to exactly the variables that are active under its own structural
choices.

Spaces are immutable after construction and safe to share across parallel
runs; sampling consumes an externally supplied numpy Generator.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np

from .errors import SpecificationError

Config = dict[str, Any]
Configuration = Config

CATEGORICAL = "categorical"
INTEGER = "integer"
CONTINUOUS = "continuous"
_KINDS = (CATEGORICAL, INTEGER, CONTINUOUS)


@dataclass(frozen=True)
class Condition:
    """Membership test: the named variable's value must be in `allowed`."""

    var: str
    allowed: tuple[Any, ...]

    def holds(self, assignments: Mapping[str, Any]) -> bool:
        return assignments.get(self.var) in self.allowed


@dataclass(frozen=True)
class VariableSpec:
    """One variable: name, kind, domain, optional activation conjunction.

    `domain` is a tuple of values for categoricals and an inclusive
    (lo, hi) pair for integer/continuous kinds. `ordered` marks a
    categorical whose values form a numeric ladder (moves step by index).
    """

    name: str
    kind: str
    domain: tuple[Any, ...]
    ordered: bool = False
    activation: tuple[Condition, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise SpecificationError(f"variable {self.name}: unknown kind {self.kind!r}")
        if self.kind == CATEGORICAL:
            if not self.domain:
                raise SpecificationError(f"variable {self.name}: empty categorical domain")
            if len(set(self.domain)) != len(self.domain):
                raise SpecificationError(f"variable {self.name}: duplicate categorical values")
        else:
            if len(self.domain) != 2:
                raise SpecificationError(f"variable {self.name}: bounds must be (lo, hi)")
            lo, hi = self.domain
            if not (lo <= hi):
                raise SpecificationError(f"variable {self.name}: lo > hi")
            if self.ordered:
                raise SpecificationError(f"variable {self.name}: only categoricals can be ordered")

    @property
    def is_conditional(self) -> bool:
        return bool(self.activation)

    def active_under(self, assignments: Mapping[str, Any]) -> bool:
        return all(c.holds(assignments) for c in self.activation)

    def contains(self, value: Any) -> bool:
        if self.kind == CATEGORICAL:
            return any(value == v and type(value) is type(v) for v in self.domain)
        lo, hi = self.domain
        if self.kind == INTEGER:
            return isinstance(value, int) and not isinstance(value, bool) and lo <= value <= hi
        return isinstance(value, (int, float)) and not isinstance(value, bool) and lo <= value <= hi


@dataclass(frozen=True)
class SearchSpace:
    """Ordered, validated collection of variables.

    Declaration order is canonical: proposals, serialization, and
    tie-breaking all follow it.
    """

    name: str
    variables: tuple[VariableSpec, ...]
    _by_name: dict[str, VariableSpec] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        seen: dict[str, VariableSpec] = {}
        for var in self.variables:
            if var.name in seen:
                raise SpecificationError(f"duplicate variable name {var.name!r}")
            for cond in var.activation:
                if cond.var not in seen:
                    raise SpecificationError(
                        f"variable {var.name}: activation references "
                        f"{cond.var!r}, which is not declared earlier"
                    )
            seen[var.name] = var
        if not any(not v.is_conditional for v in self.variables):
            raise SpecificationError(f"space {self.name}: no unconditional variable")
        object.__setattr__(self, "_by_name", seen)

    def __getitem__(self, name: str) -> VariableSpec:
        try:
            return self._by_name[name]
        except KeyError:
            raise SpecificationError(f"space {self.name}: unknown variable {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    @property
    def structural(self) -> tuple[VariableSpec, ...]:
        """Unordered categoricals: the variables structural moves act on."""
        return tuple(v for v in self.variables if v.kind == CATEGORICAL and not v.ordered)

    def combination_count(self) -> int:
        """Cartesian-product size over all discrete domains, ignoring activation."""
        n = 1
        for v in self.variables:
            if v.kind == CATEGORICAL:
                n *= len(v.domain)
            elif v.kind == INTEGER:
                lo, hi = v.domain
                n *= hi - lo + 1
            else:
                raise SpecificationError(
                    f"space {self.name}: {v.name} is continuous; combination count undefined"
                )
        return n


def active_set(space: SearchSpace, partial: Mapping[str, Any]) -> set[str]:
    """Names of variables active under the structural choices in `partial`.

    Unconditional variables are always active; a conditional variable is
    active iff every membership test in its activation holds.
    """
    return {v.name for v in space.variables if v.active_under(partial)}


def sample_uniform(space: SearchSpace, rng: np.random.Generator) -> Config:
    """Draw one configuration uniformly, honoring activation conditions."""
    config: Config = {}
    for var in space.variables:
        if not var.active_under(config):
            continue
        config[var.name] = _draw_uniform(var, rng)
    return config


def _draw_uniform(var: VariableSpec, rng: np.random.Generator) -> Any:
    if var.kind == CATEGORICAL:
        return var.domain[int(rng.integers(len(var.domain)))]
    lo, hi = var.domain
    if var.kind == INTEGER:
        return int(rng.integers(lo, hi + 1))
    return float(rng.uniform(lo, hi))


def validate(space: SearchSpace, config: Mapping[str, Any]) -> str | None:
    """Check a configuration; return None when ok, else a description
    naming the first offending variable in declaration order."""
    for var in space.variables:
        is_active = var.active_under(config)
        assigned = var.name in config
        if is_active and not assigned:
            return f"{var.name}: active but unassigned"
        if not is_active and assigned:
            return f"{var.name}: assigned but inactive under the current structural choices"
        if assigned and not var.contains(config[var.name]):
            return f"{var.name}: value {config[var.name]!r} outside domain"
    unknown = [k for k in config if k not in space]
    if unknown:
        return f"{sorted(unknown)[0]}: not a variable of space {space.name!r}"
    return None


def require_valid(space: SearchSpace, config: Mapping[str, Any]) -> None:
    problem = validate(space, config)
    if problem is not None:
        raise SpecificationError(f"invalid configuration for {space.name}: {problem}")


# ---------------------------------------------------------------------------
# Declarative space files (one JSON document per space)

def space_to_dict(space: SearchSpace) -> dict[str, Any]:
    out: dict[str, Any] = {"name": space.name, "variables": []}
    for v in space.variables:
        entry: dict[str, Any] = {"name": v.name, "kind": v.kind}
        if v.kind == CATEGORICAL:
            entry["domain"] = list(v.domain)
            if v.ordered:
                entry["ordered"] = True
        else:
            entry["lo"], entry["hi"] = v.domain
        if v.activation:
            entry["activation"] = [{"var": c.var, "in": list(c.allowed)} for c in v.activation]
        out["variables"].append(entry)
    return out


def space_from_dict(doc: Mapping[str, Any]) -> SearchSpace:
    variables = []
    for entry in doc.get("variables", []):
        kind = entry["kind"]
        if kind == CATEGORICAL:
            domain = tuple(entry["domain"])
        else:
            domain = (entry["lo"], entry["hi"])
        activation = tuple(
            Condition(var=c["var"], allowed=tuple(c["in"])) for c in entry.get("activation", [])
        )
        variables.append(
            VariableSpec(
                name=entry["name"],
                kind=kind,
                domain=domain,
                ordered=bool(entry.get("ordered", False)),
                activation=activation,
            )
        )
    return SearchSpace(name=doc["name"], variables=tuple(variables))


def load_space(path: str | Path) -> SearchSpace:
    with open(path, encoding="utf-8") as fh:
        return space_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# Built-in spaces

MODEL_NAMES = ("resnet18", "resnet50", "mobilenet_v2", "efficientnet_b0", "vit_tiny")
QUANTIZATIONS = ("fp32", "fp16", "int8_dynamic")
BACKENDS = ("pytorch_eager", "torch_compile", "onnxruntime")
BATCH_SIZES = (1, 2, 4, 8, 16, 32)


def deployment_space() -> SearchSpace:
    """Model/quantization/backend/batch space with a conditional thread count."""
    return SearchSpace(
        name="deployment",
        variables=(
            VariableSpec("model_name", CATEGORICAL, MODEL_NAMES),
            VariableSpec("backend", CATEGORICAL, BACKENDS),
            VariableSpec("quantization", CATEGORICAL, QUANTIZATIONS),
            VariableSpec("batch_size", CATEGORICAL, BATCH_SIZES, ordered=True),
            VariableSpec(
                "num_threads",
                INTEGER,
                (1, 8),
                activation=(Condition("backend", ("pytorch_eager", "onnxruntime")),),
            ),
        ),
    )


def crashy_branin_space() -> SearchSpace:
    return SearchSpace(
        name="crashy_branin",
        variables=(
            VariableSpec("mode", CATEGORICAL, ("A", "B", "C")),
            VariableSpec("resolution", INTEGER, (1, 5)),
            VariableSpec("x1", CONTINUOUS, (-5.0, 10.0)),
            VariableSpec("x2", CONTINUOUS, (0.0, 15.0)),
        ),
    )


def hier_rosenbrock_space() -> SearchSpace:
    """Categorical mode activating 2, 4, or 6 continuous coordinates."""
    variables = [VariableSpec("mode", CATEGORICAL, ("m2", "m4", "m6"))]
    for i in range(1, 7):
        if i <= 2:
            activation: tuple[Condition, ...] = ()
        elif i <= 4:
            activation = (Condition("mode", ("m4", "m6")),)
        else:
            activation = (Condition("mode", ("m6",)),)
        variables.append(
            VariableSpec(f"x{i}", CONTINUOUS, (-2.0, 2.0), activation=activation)
        )
    return SearchSpace(name="hier_rosenbrock", variables=tuple(variables))


def iter_discrete_configs(space: SearchSpace) -> Iterable[Config]:
    """Enumerate every valid configuration of a fully discrete space,
    honoring activation (inactive variables are simply absent)."""

    def rec(idx: int, partial: Config) -> Iterable[Config]:
        if idx == len(space.variables):
            yield dict(partial)
            return
        var = space.variables[idx]
        if not var.active_under(partial):
            yield from rec(idx + 1, partial)
            return
        if var.kind == CATEGORICAL:
            values: Iterable[Any] = var.domain
        elif var.kind == INTEGER:
            lo, hi = var.domain
            values = range(lo, hi + 1)
        else:
            raise SpecificationError(f"{var.name} is continuous; cannot enumerate")
        for value in values:
            partial[var.name] = value
            yield from rec(idx + 1, partial)
            del partial[var.name]

    yield from rec(0, {})
