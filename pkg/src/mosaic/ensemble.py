"""Greedy forward ensemble selection with replacement over evaluated models."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np


@dataclass(frozen=True, eq=False)
class PredictionMatrix:
    """Validation predictions of candidate models.

    ``probs[i, j, c]`` is model ``i``'s probability of class ``c`` on validation
    instance ``j``; ``targets[j]`` is the true class index. Hard label rows are
    accepted through :meth:`from_labels`.
    """

    probs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        targets = np.asarray(self.targets)
        if probs.ndim != 3:
            raise ValueError("probs must have shape (models, instances, classes)")
        if targets.shape != (probs.shape[1],):
            raise ValueError("one target per validation instance required")
        if not np.allclose(probs.sum(axis=2), 1.0, rtol=0, atol=1e-9):
            raise ValueError("probability rows must sum to 1")
        if targets.size and (targets.min() < 0 or targets.max() >= probs.shape[2]):
            raise ValueError("targets must be class indices")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "targets", targets.astype(np.int64))

    @classmethod
    def from_labels(cls, labels, targets, n_classes: int | None = None) -> "PredictionMatrix":
        labels = np.asarray(labels, dtype=np.int64)
        targets = np.asarray(targets, dtype=np.int64)
        k = n_classes or int(max(labels.max(initial=0), targets.max(initial=0))) + 1
        return cls(np.eye(k)[labels], targets)

    @property
    def n_models(self) -> int:
        return self.probs.shape[0]


@dataclass(frozen=True)
class EnsembleWeights:
    weights: Mapping[int, float]
    size: int
    score: float


def accuracy(probs: np.ndarray, targets: np.ndarray) -> float:
    return float(np.mean(np.argmax(probs, axis=-1) == targets))


def ensemble_predict(weights: EnsembleWeights | Mapping[int, float], probs) -> np.ndarray:
    """Argmax class of the weighted average of the rows (lowest class on ties)."""
    w = weights.weights if isinstance(weights, EnsembleWeights) else weights
    probs = probs.probs if isinstance(probs, PredictionMatrix) else np.asarray(probs, dtype=np.float64)
    missing = [i for i in w if not 0 <= i < len(probs)]
    if missing:
        raise KeyError(f"no prediction rows for models {missing}")
    avg = np.zeros(probs.shape[1:])
    for i in sorted(w):
        avg += w[i] * probs[i]
    return np.argmax(avg, axis=-1)


def build_ensemble(preds: PredictionMatrix, max_size: int = 50, rng=None) -> EnsembleWeights:
    """Caruana-style selection: add the model that most improves validation accuracy.

    Returns the multiset from the best-scoring step (earliest on ties). ``rng``
    is accepted for interface symmetry; every tie is resolved by lowest index.
    """
    if preds.n_models == 0:
        raise ValueError("build_ensemble needs at least one candidate")
    if max_size < 1:
        raise ValueError("max_size must be >= 1")
    probs, targets = preds.probs, preds.targets
    counts = np.zeros(preds.n_models, dtype=np.int64)
    running = np.zeros(probs.shape[1:])
    best_score, best_counts = -1.0, None
    for step in range(1, max_size + 1):
        # integer-count sums: argmax is scale-free, so no division is needed
        trial = running[None] + probs
        scores = np.mean(np.argmax(trial, axis=-1) == targets[None], axis=1)
        pick = int(np.argmax(scores))
        counts[pick] += 1
        running += probs[pick]
        if scores[pick] > best_score:
            best_score, best_counts = float(scores[pick]), counts.copy()
    size = int(best_counts.sum())
    weights = {int(i): best_counts[i] / size for i in np.flatnonzero(best_counts)}
    score = accuracy_of(weights, preds)
    single = [accuracy(probs[i], targets) for i in range(preds.n_models)]
    top = int(np.argmax(single))
    if score < single[top]:
        # guard against rounding flipping a near-tie once counts become weights
        return EnsembleWeights({top: 1.0}, 1, single[top])
    return EnsembleWeights(weights, size, score)


def accuracy_of(weights, preds: PredictionMatrix) -> float:
    return float(np.mean(ensemble_predict(weights, preds) == preds.targets))
