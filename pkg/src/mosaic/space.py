"""Hierarchical pipeline search spaces.

A search space is a fixed ordered sequence of decision steps. At each step one
algorithm is chosen; every algorithm owns a (possibly conditional) set of
bounded hyperparameters. Some structure prefixes are forbidden outright.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator, Literal, Mapping, Sequence

from pydantic import BaseModel, ConfigDict, ValidationError

CATEGORICAL = "categorical"
INTEGER = "integer"
CONTINUOUS = "continuous"
KINDS = (CATEGORICAL, INTEGER, CONTINUOUS)


class SpaceError(ValueError):
    pass


class DeadEndError(SpaceError):
    """A prefix has no admissible completion."""


class InadmissibleError(SpaceError):
    pass


@dataclass(frozen=True)
class Condition:
    """Hyperparameter is active only when ``parent`` is active and takes one of ``values``."""

    parent: str
    values: tuple


@dataclass(frozen=True)
class HyperparameterSpec:
    name: str
    kind: str
    values: tuple = ()
    lower: float | None = None
    upper: float | None = None
    condition: Condition | None = None
    bias: tuple[float, ...] | None = None

    @classmethod
    def categorical(cls, name, values, condition=None, bias=None):
        return cls(name, CATEGORICAL, values=tuple(values), condition=condition,
                   bias=None if bias is None else tuple(bias))

    @classmethod
    def integer(cls, name, lower, upper, condition=None, bias=None):
        return cls(name, INTEGER, lower=int(lower), upper=int(upper), condition=condition,
                   bias=None if bias is None else tuple(bias))

    @classmethod
    def continuous(cls, name, lower, upper, condition=None, bias=None):
        return cls(name, CONTINUOUS, lower=float(lower), upper=float(upper), condition=condition,
                   bias=None if bias is None else tuple(bias))

    @property
    def is_numeric(self) -> bool:
        return self.kind != CATEGORICAL

    @property
    def n_levels(self) -> int | None:
        """Number of distinct values, or None for continuous domains."""
        if self.kind == CATEGORICAL:
            return len(self.values)
        if self.kind == INTEGER:
            return int(self.upper) - int(self.lower) + 1
        return None

    def contains(self, value) -> bool:
        if self.kind == CATEGORICAL:
            return any(_same_value(value, v) for v in self.values)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return False
        if self.kind == INTEGER and not float(value).is_integer():
            return False
        return math.isfinite(value) and self.lower <= value <= self.upper

    def normalize(self, value) -> float:
        return (float(value) - self.lower) / (self.upper - self.lower)

    def index_of(self, value) -> int:
        for i, v in enumerate(self.values):
            if _same_value(value, v):
                return i
        raise KeyError(value)

    def default_value(self):
        if self.kind == CATEGORICAL:
            return self.values[0]
        if self.kind == INTEGER:
            return (int(self.lower) + int(self.upper)) // 2
        return (self.lower + self.upper) / 2.0


def _same_value(a, b) -> bool:
    # keep True distinct from 1 and "1" distinct from 1
    return type(a) is type(b) and a == b or (
        isinstance(a, (int, float)) and isinstance(b, (int, float))
        and not isinstance(a, bool) and not isinstance(b, bool) and a == b)


@dataclass(frozen=True)
class AlgorithmChoice:
    name: str
    hyperparameters: tuple[HyperparameterSpec, ...] = ()
    default_theta: Mapping[str, Any] = field(default_factory=dict)

    def hp(self, name: str) -> HyperparameterSpec:
        for spec in self.hyperparameters:
            if spec.name == name:
                return spec
        raise KeyError(name)

    def ordered_hyperparameters(self) -> list[HyperparameterSpec]:
        """Hyperparameters with every condition parent before its children."""
        by_name = {h.name: h for h in self.hyperparameters}
        order: list[HyperparameterSpec] = []
        state: dict[str, int] = {}

        def visit(h):
            mark = state.get(h.name, 0)
            if mark == 2:
                return
            if mark == 1:
                raise SpaceError(f"{self.name}: cyclic activation condition through '{h.name}'")
            state[h.name] = 1
            if h.condition is not None and h.condition.parent in by_name:
                visit(by_name[h.condition.parent])
            state[h.name] = 2
            order.append(h)

        for h in self.hyperparameters:
            visit(h)
        return order

    def active_theta(self, assignment: Mapping[str, Any], fill_defaults: bool = True) -> dict:
        """Restrict ``assignment`` to active hyperparameters.

        Newly activated hyperparameters missing from ``assignment`` take their
        default value when ``fill_defaults`` is set.
        """
        out: dict[str, Any] = {}
        for h in self.ordered_hyperparameters():
            if not _is_active(h, out):
                continue
            if h.name in assignment:
                out[h.name] = assignment[h.name]
            elif fill_defaults:
                out[h.name] = self.default_theta.get(h.name, h.default_value())
        return {h.name: out[h.name] for h in self.hyperparameters if h.name in out}


def _is_active(h: HyperparameterSpec, assigned: Mapping[str, Any]) -> bool:
    if h.condition is None:
        return True
    if h.condition.parent not in assigned:
        return False
    value = assigned[h.condition.parent]
    return any(_same_value(value, v) for v in h.condition.values)


@dataclass(frozen=True)
class DecisionStep:
    index: int
    algorithms: tuple[AlgorithmChoice, ...]
    default: str | None = None

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.algorithms)

    def algorithm(self, name: str) -> AlgorithmChoice:
        for a in self.algorithms:
            if a.name == name:
                return a
        raise KeyError(f"step {self.index} has no algorithm '{name}'")

    @property
    def default_algorithm(self) -> str:
        return self.default if self.default is not None else self.algorithms[0].name


@dataclass(frozen=True, eq=False)
class SearchSpace:
    """An ordered sequence of decision steps plus forbidden prefix patterns.

    Each forbidden pattern is a tuple of ``(step, algorithm)`` pairs; a prefix
    matching every pair of some pattern is inadmissible.
    """

    name: str
    steps: tuple[DecisionStep, ...]
    forbidden: tuple[tuple[tuple[int, str], ...], ...] = ()
    _memo: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    def algorithm(self, step: int, name: str) -> AlgorithmChoice:
        """Algorithm ``name`` at 0-based decision position ``step``."""
        return self.steps[step].algorithm(name)

    def admissible(self, decisions: Sequence[str]) -> bool:
        k = len(decisions)
        for pattern in self.forbidden:
            if all(step <= k and decisions[step - 1] == alg for step, alg in pattern):
                return False
        return True

    def offending_pattern(self, decisions: Sequence[str]):
        k = len(decisions)
        for pattern in self.forbidden:
            if all(step <= k and decisions[step - 1] == alg for step, alg in pattern):
                return pattern
        return None

    def completable(self, prefix: Sequence[str]) -> bool:
        """True iff ``prefix`` is admissible and extends to an admissible structure."""
        prefix = tuple(prefix)
        memo = self._memo.setdefault("completable", {})
        hit = memo.get(prefix)
        if hit is not None:
            return hit
        k = len(prefix)
        if k > self.n_steps or not self.admissible(prefix):
            ok = False
        elif any(name not in self.steps[i].names for i, name in enumerate(prefix)):
            ok = False
        elif k == self.n_steps:
            ok = True
        else:
            ok = any(self.completable(prefix + (a,)) for a in self.steps[k].names)
        memo[prefix] = ok
        return ok

    def viable_actions(self, prefix: Sequence[str]) -> tuple[str, ...]:
        """Next-step algorithms that keep ``prefix`` completable, in declared order."""
        prefix = tuple(prefix)
        memo = self._memo.setdefault("viable", {})
        hit = memo.get(prefix)
        if hit is None:
            if len(prefix) >= self.n_steps:
                hit = ()
            else:
                hit = tuple(a for a in self.steps[len(prefix)].names if self.completable(prefix + (a,)))
            memo[prefix] = hit
        return hit

    def structures(self) -> Iterator[tuple[str, ...]]:
        """All admissible complete structures, in lexicographic declaration order."""
        def walk(prefix):
            if len(prefix) == self.n_steps:
                yield prefix
                return
            for a in self.viable_actions(prefix):
                yield from walk(prefix + (a,))

        if self.completable(()):
            yield from walk(())


@dataclass(frozen=True, eq=False)
class Pipeline:
    """A full configuration: one algorithm per step and its active hyperparameter values."""

    structure: tuple[str, ...]
    theta: tuple[Mapping[str, Any], ...]

    def __post_init__(self):
        object.__setattr__(self, "structure", tuple(self.structure))
        object.__setattr__(self, "theta", tuple(dict(t) for t in self.theta))

    @property
    def key(self) -> tuple:
        return (self.structure, tuple(tuple(sorted((k, _hashable(v)) for k, v in t.items()))
                                      for t in self.theta))

    def __eq__(self, other):
        return isinstance(other, Pipeline) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def to_dict(self) -> dict:
        return {"structure": list(self.structure), "theta": [dict(t) for t in self.theta]}

    @classmethod
    def from_dict(cls, data: Mapping) -> "Pipeline":
        if set(data) != {"structure", "theta"}:
            raise SpaceError(f"pipeline object needs exactly 'structure' and 'theta', got {sorted(data)}")
        return cls(tuple(data["structure"]), tuple(dict(t) for t in data["theta"]))

    def __repr__(self):
        parts = [f"{a}{dict(t) if t else ''}" for a, t in zip(self.structure, self.theta)]
        return f"Pipeline({' > '.join(parts)})"


def _hashable(v):
    # tag by type so True and 1 stay distinct keys
    return (type(v).__name__, v)


PipelinePrefix = tuple  # tuple[str, ...] of algorithm names, length k <= n_steps


def compatible(prefix: Sequence[str], x: Pipeline) -> bool:
    """True iff the first ``len(prefix)`` decisions of ``x`` equal ``prefix``."""
    k = len(prefix)
    return k <= len(x.structure) and tuple(x.structure[:k]) == tuple(prefix)


# ---------------------------------------------------------------------------
# validation


def validate_space(space: SearchSpace) -> list[str]:
    """Return human-readable violations; an empty list means the space is valid."""
    report: list[str] = []
    if not space.steps:
        return ["space has no decision steps"]
    for pos, step in enumerate(space.steps):
        where = f"step {step.index}"
        if step.index != pos + 1:
            report.append(f"{where}: index must be {pos + 1} (steps are numbered 1..n in order)")
        if not step.algorithms:
            report.append(f"{where}: no algorithm choices")
            continue
        names = step.names
        for dup in sorted({n for n in names if names.count(n) > 1}):
            report.append(f"{where}: duplicate algorithm name '{dup}'")
        if step.default is not None and step.default not in names:
            report.append(f"{where}: default algorithm '{step.default}' is not a choice")
        for algo in step.algorithms:
            report.extend(_validate_algorithm(algo, f"{where}/{algo.name}"))
    for pattern in space.forbidden:
        for s, alg in pattern:
            if not 1 <= s <= len(space.steps):
                report.append(f"forbidden pattern {list(pattern)}: no step {s}")
            elif alg not in space.steps[s - 1].names:
                report.append(f"forbidden pattern {list(pattern)}: step {s} has no algorithm '{alg}'")
    if not any(r.startswith("step") and "no algorithm choices" in r for r in report):
        if not space.completable(()):
            report.append("no admissible structure")
    return report


def _validate_algorithm(algo: AlgorithmChoice, where: str) -> list[str]:
    report = []
    names = [h.name for h in algo.hyperparameters]
    for dup in sorted({n for n in names if names.count(n) > 1}):
        report.append(f"{where}: duplicate hyperparameter '{dup}'")
    for h in algo.hyperparameters:
        hw = f"{where}.{h.name}"
        if h.kind not in KINDS:
            report.append(f"{hw}: unknown kind '{h.kind}'")
            continue
        if h.kind == CATEGORICAL:
            if len(h.values) < 2:
                report.append(f"{hw}: categorical needs at least 2 values")
        else:
            if h.lower is None or h.upper is None or not (math.isfinite(h.lower) and math.isfinite(h.upper)):
                report.append(f"{hw}: numeric domain must be bounded")
                continue
            if not h.lower < h.upper:
                report.append(f"{hw}: lower bound {h.lower} must be < upper bound {h.upper}")
                continue
        if h.bias is not None:
            expected = h.n_levels if h.kind != CONTINUOUS else None
            if expected is not None and len(h.bias) != expected:
                report.append(f"{hw}: bias has {len(h.bias)} weights, expected {expected}")
            if any(not math.isfinite(w) or w < 0 for w in h.bias) or not sum(h.bias) > 0:
                report.append(f"{hw}: bias weights must be nonnegative with positive sum")
        if h.condition is not None:
            parent = next((p for p in algo.hyperparameters if p.name == h.condition.parent), None)
            if parent is None:
                report.append(f"{hw}: condition parent '{h.condition.parent}' is not declared")
            elif parent.kind == CONTINUOUS:
                report.append(f"{hw}: condition parent '{parent.name}' must be categorical or integer")
            elif not h.condition.values or not all(parent.contains(v) for v in h.condition.values):
                report.append(f"{hw}: condition values {list(h.condition.values)} outside parent domain")
    try:
        algo.ordered_hyperparameters()
    except SpaceError as exc:
        report.append(str(exc))
    assigned = set(algo.default_theta)
    declared = set(names)
    for extra in sorted(assigned - declared):
        report.append(f"{where}: default assigns undeclared hyperparameter '{extra}'")
    for missing in sorted(declared - assigned):
        report.append(f"{where}: default does not assign hyperparameter '{missing}'")
    for h in algo.hyperparameters:
        if h.name in algo.default_theta and h.kind in KINDS and not h.contains(algo.default_theta[h.name]):
            report.append(f"{where}.{h.name}: default value {algo.default_theta[h.name]!r} outside its domain")
    return report


def check_pipeline(space: SearchSpace, x: Pipeline) -> list[str]:
    """Violations making ``x`` invalid in ``space`` (empty when valid)."""
    if len(x.structure) != space.n_steps or len(x.theta) != space.n_steps:
        return [f"pipeline has {len(x.structure)} decisions, space has {space.n_steps} steps"]
    report = []
    for i, (name, theta) in enumerate(zip(x.structure, x.theta)):
        try:
            algo = space.algorithm(i, name)
        except KeyError:
            report.append(f"step {i + 1}: unknown algorithm '{name}'")
            continue
        active = algo.active_theta(theta, fill_defaults=False)
        for h in algo.hyperparameters:
            if h.name in active and not h.contains(theta[h.name]):
                report.append(f"step {i + 1}/{name}.{h.name}: value {theta[h.name]!r} out of domain")
        for extra in sorted(set(theta) - set(active)):
            report.append(f"step {i + 1}/{name}: '{extra}' assigned but inactive or undeclared")
        expected = algo.active_theta(active)
        for missing in sorted(set(expected) - set(theta)):
            report.append(f"step {i + 1}/{name}: active hyperparameter '{missing}' unassigned")
    if not report and not space.admissible(x.structure):
        report.append(f"structure {list(x.structure)} is not admissible")
    return report


def require_valid(space: SearchSpace) -> SearchSpace:
    report = validate_space(space)
    if report:
        raise SpaceError("invalid search space: " + "; ".join(report))
    return space


def default_pipeline(space: SearchSpace, first_algorithm: str) -> Pipeline:
    """Pipeline starting with ``first_algorithm``, other steps at their default algorithm, all θ default."""
    if first_algorithm not in space.steps[0].names:
        raise KeyError(f"'{first_algorithm}' is not a step-1 algorithm")
    structure = (first_algorithm,) + tuple(s.default_algorithm for s in space.steps[1:])
    pattern = space.offending_pattern(structure)
    if pattern is not None:
        raise InadmissibleError(
            f"default structure {list(structure)} is forbidden by constraint {[list(p) for p in pattern]}")
    theta = tuple(space.algorithm(i, a).active_theta(space.algorithm(i, a).default_theta)
                  for i, a in enumerate(structure))
    return Pipeline(structure, theta)


def is_discrete(space: SearchSpace) -> bool:
    return all(h.kind != CONTINUOUS for s in space.steps for a in s.algorithms for h in a.hyperparameters)


def _algorithm_configs(algo: AlgorithmChoice) -> list[dict]:
    """All active assignments of a fully discrete algorithm."""
    out = []
    order = algo.ordered_hyperparameters()

    def rec(i, assigned):
        if i == len(order):
            out.append({h.name: assigned[h.name] for h in algo.hyperparameters if h.name in assigned})
            return
        h = order[i]
        if not _is_active(h, assigned):
            rec(i + 1, assigned)
            return
        if h.kind == CATEGORICAL:
            levels = list(h.values)
        else:
            levels = list(range(int(h.lower), int(h.upper) + 1))
        for v in levels:
            assigned[h.name] = v
            rec(i + 1, assigned)
            del assigned[h.name]

    rec(0, {})
    return out


def enumerate_pipelines(space: SearchSpace) -> Iterator[Pipeline]:
    """Every valid pipeline of a fully discrete space."""
    if not is_discrete(space):
        raise SpaceError("space has continuous hyperparameters; it cannot be enumerated")
    cache = {}
    for structure in space.structures():
        per_step = []
        for i, name in enumerate(structure):
            if (i, name) not in cache:
                cache[i, name] = _algorithm_configs(space.algorithm(i, name))
            per_step.append(cache[i, name])
        for thetas in itertools.product(*per_step):
            yield Pipeline(structure, thetas)


def count_pipelines(space: SearchSpace) -> int:
    total = 0
    sizes = {}
    for structure in space.structures():
        n = 1
        for i, name in enumerate(structure):
            if (i, name) not in sizes:
                sizes[i, name] = len(_algorithm_configs(space.algorithm(i, name)))
            n *= sizes[i, name]
        total += n
    return total


# ---------------------------------------------------------------------------
# JSON documents


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ConditionDoc(_Strict):
    parent: str
    values: list[Any]


class HyperparameterDoc(_Strict):
    name: str
    kind: Literal["categorical", "integer", "continuous"]
    domain: list[Any]
    condition: ConditionDoc | None = None
    bias: list[float] | None = None


class AlgorithmDoc(_Strict):
    name: str
    default: dict[str, Any] | None = None
    hyperparameters: list[HyperparameterDoc] = []


class StepDoc(_Strict):
    index: int
    algorithms: list[AlgorithmDoc]
    default: str | None = None


class ForbiddenPairDoc(_Strict):
    step: int
    algorithm: str


class SpaceDoc(_Strict):
    name: str
    steps: list[StepDoc]
    forbidden: list[list[ForbiddenPairDoc]] = []


def _hp_from_doc(doc: HyperparameterDoc) -> HyperparameterSpec:
    cond = None if doc.condition is None else Condition(doc.condition.parent, tuple(doc.condition.values))
    bias = None if doc.bias is None else tuple(doc.bias)
    if doc.kind == CATEGORICAL:
        return HyperparameterSpec(doc.name, CATEGORICAL, values=tuple(doc.domain), condition=cond, bias=bias)
    if len(doc.domain) != 2:
        raise SpaceError(f"hyperparameter '{doc.name}': numeric domain must be [lower, upper]")
    lo, hi = doc.domain
    if doc.kind == INTEGER:
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in (lo, hi)):
            raise SpaceError(f"hyperparameter '{doc.name}': integer bounds must be integers")
        return HyperparameterSpec(doc.name, INTEGER, lower=lo, upper=hi, condition=cond, bias=bias)
    return HyperparameterSpec(doc.name, CONTINUOUS, lower=float(lo), upper=float(hi), condition=cond, bias=bias)


def space_from_dict(data: Mapping) -> SearchSpace:
    """Build a space from its JSON form. Unknown fields raise ``SpaceError``."""
    try:
        doc = SpaceDoc.model_validate(data)
    except ValidationError as exc:
        raise SpaceError(f"malformed search space document: {exc}") from exc
    steps = []
    for s in doc.steps:
        algos = []
        for a in s.algorithms:
            hps = tuple(_hp_from_doc(h) for h in a.hyperparameters)
            if a.default is None:
                default = {h.name: h.default_value() for h in hps}
            else:
                default = dict(a.default)
            algos.append(AlgorithmChoice(a.name, hps, default))
        steps.append(DecisionStep(s.index, tuple(algos), s.default))
    forbidden = tuple(tuple((p.step, p.algorithm) for p in pattern) for pattern in doc.forbidden)
    return SearchSpace(doc.name, tuple(steps), forbidden)


def space_to_dict(space: SearchSpace) -> dict:
    steps = []
    for s in space.steps:
        algos = []
        for a in s.algorithms:
            hps = []
            for h in a.hyperparameters:
                d: dict[str, Any] = {"name": h.name, "kind": h.kind}
                d["domain"] = list(h.values) if h.kind == CATEGORICAL else [h.lower, h.upper]
                if h.condition is not None:
                    d["condition"] = {"parent": h.condition.parent, "values": list(h.condition.values)}
                if h.bias is not None:
                    d["bias"] = list(h.bias)
                hps.append(d)
            algos.append({"name": a.name, "default": dict(a.default_theta), "hyperparameters": hps})
        step = {"index": s.index, "algorithms": algos}
        if s.default is not None:
            step["default"] = s.default
        steps.append(step)
    return {"name": space.name, "steps": steps,
            "forbidden": [[{"step": st, "algorithm": al} for st, al in p] for p in space.forbidden]}


def load_space(path) -> SearchSpace:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpaceError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return space_from_dict(data)


def save_space(space: SearchSpace, path) -> None:
    Path(path).write_text(json.dumps(space_to_dict(space), indent=2) + "\n")
