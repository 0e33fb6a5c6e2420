"""Fixed-length numeric encoding of pipelines for the surrogate.

Layout, step by step: a one-hot block over the step's algorithms, then one slot
group per (algorithm, hyperparameter): a single column for numeric
hyperparameters (min-max normalized) and a one-hot block for categorical ones.
Slots of unchosen algorithms and inactive hyperparameters hold ``INACTIVE``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .space import CATEGORICAL, Pipeline, SearchSpace

INACTIVE = -1.0


@dataclass(frozen=True)
class Slot:
    column: int
    width: int
    kind: str
    lower: float
    span: float


@dataclass(frozen=True)
class Layout:
    dim: int
    step_columns: tuple[int, ...]
    algorithm_index: tuple[dict, ...]
    slots: dict  # (step, algorithm name, hp name) -> Slot


def layout(space: SearchSpace) -> Layout:
    memo = space._memo
    if "layout" in memo:
        return memo["layout"]
    col = 0
    step_columns, algorithm_index, slots = [], [], {}
    for i, step in enumerate(space.steps):
        step_columns.append(col)
        algorithm_index.append({a.name: j for j, a in enumerate(step.algorithms)})
        col += len(step.algorithms)
        for algo in step.algorithms:
            for h in algo.hyperparameters:
                if h.kind == CATEGORICAL:
                    slots[i, algo.name, h.name] = Slot(col, len(h.values), h.kind, 0.0, 1.0)
                    col += len(h.values)
                else:
                    slots[i, algo.name, h.name] = Slot(col, 1, h.kind, float(h.lower),
                                                       float(h.upper) - float(h.lower))
                    col += 1
    out = Layout(col, tuple(step_columns), tuple(algorithm_index), slots)
    memo["layout"] = out
    return out


def encode(space: SearchSpace, x: Pipeline) -> np.ndarray:
    lay = layout(space)
    v = np.full(lay.dim, INACTIVE)
    for i, (name, theta) in enumerate(zip(x.structure, x.theta)):
        index = lay.algorithm_index[i]
        start = lay.step_columns[i]
        v[start:start + len(index)] = 0.0
        v[start + index[name]] = 1.0
        algo = space.algorithm(i, name)
        for hp_name, value in theta.items():
            slot = lay.slots[i, name, hp_name]
            if slot.kind == CATEGORICAL:
                v[slot.column:slot.column + slot.width] = 0.0
                v[slot.column + algo.hp(hp_name).index_of(value)] = 1.0
            else:
                v[slot.column] = (float(value) - slot.lower) / slot.span
    return v


def encode_many(space: SearchSpace, pipelines) -> np.ndarray:
    lay = layout(space)
    if not pipelines:
        return np.empty((0, lay.dim))
    return np.vstack([encode(space, x) for x in pipelines])
