"""Sampling from the default distribution and local neighborhoods.

The default distribution picks each remaining step's algorithm uniformly among
the choices that keep the structure completable, then draws every active
hyperparameter uniformly in its domain (or from its bias table). Draws are
vectorized: a whole batch is sampled with one generator call per
(step, algorithm, hyperparameter) rather than per pipeline.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .encoding import INACTIVE, layout
from .space import (CATEGORICAL, CONTINUOUS, DeadEndError, HyperparameterSpec,
                    Pipeline, SearchSpace)


def _ordered(space: SearchSpace, step: int, algo):
    memo = space._memo.setdefault("ordered", {})
    key = (step, algo.name)
    if key not in memo:
        order = []
        for h in algo.ordered_hyperparameters():
            codes = None
            if h.condition is not None:
                parent = algo.hp(h.condition.parent)
                if parent.kind == CATEGORICAL:
                    codes = np.array([parent.index_of(v) for v in h.condition.values], dtype=float)
                else:
                    codes = np.array(h.condition.values, dtype=float)
            order.append((h, codes))
        memo[key] = order
    return memo[key]


def _draw(h: HyperparameterSpec, size: int, rng: np.random.Generator) -> np.ndarray:
    if h.kind == CATEGORICAL:
        k = len(h.values)
        if h.bias is None:
            return rng.integers(0, k, size=size).astype(float)
        w = np.asarray(h.bias, dtype=float)
        return rng.choice(k, size=size, p=w / w.sum()).astype(float)
    lo, hi = h.lower, h.upper
    if h.kind == CONTINUOUS:
        if h.bias is None:
            return np.clip(rng.uniform(lo, hi, size=size), lo, hi)
        w = np.asarray(h.bias, dtype=float)
        bins = rng.choice(len(w), size=size, p=w / w.sum())
        u = (bins + rng.random(size)) / len(w)
        return np.clip(lo + u * (hi - lo), lo, hi)
    lo, hi = int(lo), int(hi)
    if h.bias is None:
        return rng.integers(lo, hi + 1, size=size).astype(float)
    w = np.asarray(h.bias, dtype=float)
    return (lo + rng.choice(hi - lo + 1, size=size, p=w / w.sum())).astype(float)


class PipelineBatch:
    """Column-oriented batch of pipelines drawn from the default distribution.

    ``choices[r, i]`` is the index of the algorithm picked at step ``i``;
    ``values[(i, algorithm, hp)][r]`` is the raw value (category index for
    categorical hyperparameters) or NaN when unassigned.
    """

    def __init__(self, space: SearchSpace, choices: np.ndarray, values: dict):
        self.space = space
        self.choices = choices
        self.values = values

    def __len__(self) -> int:
        return self.choices.shape[0]

    def encode(self) -> np.ndarray:
        space, lay = self.space, layout(self.space)
        n = len(self)
        out = np.full((n, lay.dim), INACTIVE)
        rows = np.arange(n)
        for i, start in enumerate(lay.step_columns):
            width = len(space.steps[i].algorithms)
            out[:, start:start + width] = 0.0
            out[rows, start + self.choices[:, i]] = 1.0
        for key, arr in self.values.items():
            active = np.flatnonzero(~np.isnan(arr))
            if active.size == 0:
                continue
            slot = lay.slots[key]
            if slot.kind == CATEGORICAL:
                out[active, slot.column:slot.column + slot.width] = 0.0
                out[active, slot.column + arr[active].astype(np.int64)] = 1.0
            else:
                out[active, slot.column] = (arr[active] - slot.lower) / slot.span
        return out

    def pipeline(self, r: int) -> Pipeline:
        space = self.space
        structure, theta = [], []
        for i, step in enumerate(space.steps):
            algo = step.algorithms[int(self.choices[r, i])]
            structure.append(algo.name)
            t = {}
            for h in algo.hyperparameters:
                v = self.values[i, algo.name, h.name][r]
                if np.isnan(v):
                    continue
                if h.kind == CATEGORICAL:
                    t[h.name] = h.values[int(v)]
                elif h.kind == CONTINUOUS:
                    t[h.name] = float(v)
                else:
                    t[h.name] = int(v)
            theta.append(t)
        return Pipeline(tuple(structure), tuple(theta))

    def pipelines(self) -> list[Pipeline]:
        return [self.pipeline(r) for r in range(len(self))]


def sample_batch(space: SearchSpace, prefix: Sequence[str], n: int,
                 rng: np.random.Generator) -> PipelineBatch:
    """Draw ``n`` pipelines from the default distribution restricted to X(prefix)."""
    prefix = tuple(prefix)
    if not space.completable(prefix):
        raise DeadEndError(f"dead-end prefix {list(prefix)}: no admissible completion")
    lay = layout(space)
    n_steps, k = space.n_steps, len(prefix)
    choices = np.empty((n, n_steps), dtype=np.int64)
    for i, name in enumerate(prefix):
        choices[:, i] = lay.algorithm_index[i][name]
    for i in range(k, n_steps):
        names = space.steps[i].names
        if not space.forbidden:
            choices[:, i] = 0 if len(names) == 1 else rng.integers(0, len(names), size=n)
            continue
        if i == k:
            groups = [(prefix, np.arange(n))]
        else:
            uniq, inverse = np.unique(choices[:, k:i], axis=0, return_inverse=True)
            inverse = inverse.reshape(-1)
            groups = []
            for g, row in enumerate(uniq):
                decided = prefix + tuple(space.steps[k + t].algorithms[c].name for t, c in enumerate(row))
                groups.append((decided, np.flatnonzero(inverse == g)))
        for decided, rows in groups:
            viable = [lay.algorithm_index[i][a] for a in space.viable_actions(decided)]
            if len(viable) == 1:
                choices[rows, i] = viable[0]
            else:
                choices[rows, i] = np.asarray(viable)[rng.integers(0, len(viable), size=rows.size)]

    values = {}
    for i, step in enumerate(space.steps):
        for j, algo in enumerate(step.algorithms):
            if not algo.hyperparameters:
                continue
            rows = np.flatnonzero(choices[:, i] == j)
            if rows.size == 0:
                continue
            drawn = {}
            for h, codes in _ordered(space, i, algo):
                arr = np.full(n, np.nan)
                act = rows if codes is None else rows[np.isin(drawn[h.condition.parent][rows], codes)]
                if act.size:
                    arr[act] = _draw(h, act.size, rng)
                drawn[h.name] = arr
                values[i, algo.name, h.name] = arr
    return PipelineBatch(space, choices, values)


def sample_default(space: SearchSpace, prefix: Sequence[str], rng: np.random.Generator) -> Pipeline:
    """One pipeline from the default distribution restricted to X(prefix)."""
    return sample_batch(space, prefix, 1, rng).pipeline(0)


def neighbors(space: SearchSpace, best: Pipeline, eps: float, m: int,
              rng: np.random.Generator) -> list[Pipeline]:
    """Pipelines one hyperparameter value or one structural decision away from ``best``.

    Categorical values are swapped for every alternative, integers moved by one
    step, continuous values get ``m`` Gaussian perturbations of standard
    deviation ``eps`` in the normalized domain. A structural change resets the
    changed step to the new algorithm's default hyperparameters.
    """
    out: list[Pipeline] = []
    seen = {best.key}

    def add(structure, theta):
        x = Pipeline(structure, theta)
        if x.key not in seen and space.admissible(structure):
            seen.add(x.key)
            out.append(x)

    structure = tuple(best.structure)
    for i, name in enumerate(structure):
        algo = space.algorithm(i, name)
        current = best.theta[i]
        for h in algo.hyperparameters:
            if h.name not in current:
                continue
            value = current[h.name]
            if h.kind == CATEGORICAL:
                alternatives = [v for v in h.values if v != value]
            elif h.kind == CONTINUOUS:
                span = h.upper - h.lower
                u = np.clip(h.normalize(value) + rng.normal(0.0, eps, size=m), 0.0, 1.0)
                alternatives = [float(min(max(h.lower + ui * span, h.lower), h.upper)) for ui in u]
            else:
                alternatives = [v for v in (int(value) - 1, int(value) + 1) if h.lower <= v <= h.upper]
            for alt in alternatives:
                t = dict(current)
                t[h.name] = alt
                theta = list(best.theta)
                theta[i] = algo.active_theta(t)
                add(structure, theta)
    for i, name in enumerate(structure):
        for other in space.steps[i].algorithms:
            if other.name == name:
                continue
            s2 = structure[:i] + (other.name,) + structure[i + 1:]
            theta = list(best.theta)
            theta[i] = other.active_theta(other.default_theta)
            add(s2, theta)
    return out
