"""Search state shared by the tree search and the baselines."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .encoding import encode, layout
from .evaluation import EvaluationRecord
from .space import SearchSpace, compatible
from .surrogate import ForestParams, SurrogateModel


class SearchState:
    """Evaluated history and the surrogate trained on it.

    Failed and timed-out evaluations enter both with reward 0.
    """

    def __init__(self, space: SearchSpace, forest_params: ForestParams = ForestParams()):
        self.space = space
        self.history: list[EvaluationRecord] = []
        self.model = SurrogateModel(layout(space).dim, forest_params)
        self.evaluated: set[bytes] = set()
        self._best: EvaluationRecord | None = None

    def add(self, record: EvaluationRecord) -> None:
        vec = encode(self.space, record.pipeline)
        self.history.append(record)
        self.model.add(vec, record.reward)
        self.evaluated.add(vec.tobytes())
        if self._best is None or record.reward > self._best.reward:
            self._best = record

    def observe(self, record: EvaluationRecord, rng: np.random.Generator) -> None:
        """Add ``record`` and retrain the surrogate from scratch."""
        self.add(record)
        self.model.refit(rng)

    @property
    def best(self) -> EvaluationRecord | None:
        return self._best

    @property
    def best_reward(self) -> float | None:
        return None if self._best is None else self._best.reward

    def incumbent(self, prefix: Sequence[str]) -> EvaluationRecord | None:
        """Best record (earliest on ties) whose pipeline lies in X(prefix)."""
        if not prefix:
            return self._best
        best = None
        for rec in self.history:
            if (best is None or rec.reward > best.reward) and compatible(prefix, rec.pipeline):
                best = rec
        return best

    def __len__(self) -> int:
        return len(self.history)

