"""Random-forest surrogate and the quantities derived from it.

The forest yields a mean and a cross-tree variance for any encoded pipeline.
On top of it sit the Expected Improvement acquisition, the partial surrogate
of a structure prefix (mean forest prediction over pipelines drawn below the
prefix) and the softmax policy over candidate actions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import ndtr

from . import forest
from .sampling import sample_batch
from .space import SearchSpace


class InsufficientDataError(ValueError):
    pass


class Prediction(NamedTuple):
    mean: float
    variance: float


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 30
    min_leaf: int = 3
    bootstrap: bool = True


@dataclass(frozen=True, eq=False)
class SurrogateForest:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    count: np.ndarray
    dim: int
    n_trees: int
    min_leaf: int
    training_size: int
    rng_seed: int

    def predict_many(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Means and variances for the rows of ``X``."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise ValueError(f"expected vectors of dimension {self.dim}, got shape {X.shape}")
        per_tree = forest.tree_predictions(X, self.feature, self.threshold, self.left, self.right, self.value)
        return forest.aggregate(per_tree)

    def tree_predictions(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        return forest.tree_predictions(X, self.feature, self.threshold, self.left, self.right, self.value)


def fit(X: np.ndarray, y: np.ndarray, params: ForestParams = ForestParams(),
        rng: np.random.Generator | int = 0) -> SurrogateForest:
    """Fit ``params.n_trees`` bootstrap CART trees on rows ``X`` with targets ``y``.

    Each node considers ``ceil(sqrt(d))`` randomly chosen non-constant
    features; children must keep at least ``min_leaf`` samples.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError("X must be 2-d with one target per row")
    if X.shape[0] < 2:
        raise InsufficientDataError("insufficient data: need at least 2 training rows")
    if isinstance(rng, np.random.Generator):
        seed = int(rng.integers(0, 2**31 - params.n_trees - 1))
    else:
        seed = int(rng)
    d = X.shape[1]
    max_features = min(d, max(1, math.ceil(math.sqrt(d))))
    arrays = forest.fit_forest(X, y, params.n_trees, params.min_leaf, max_features, seed, params.bootstrap)
    return SurrogateForest(*arrays, dim=d, n_trees=params.n_trees, min_leaf=params.min_leaf,
                           training_size=X.shape[0], rng_seed=seed)


def predict(model: SurrogateForest, x: np.ndarray) -> Prediction:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("predict takes a single encoded vector")
    mu, var = model.predict_many(x[None, :])
    return Prediction(float(mu[0]), float(var[0]))


def ei_from_moments(mean, variance, f_best) -> np.ndarray:
    """Expected Improvement for maximization under a Gaussian predictive law."""
    mean, variance = np.broadcast_arrays(np.asarray(mean, dtype=np.float64),
                                         np.asarray(variance, dtype=np.float64))
    shape = mean.shape
    mean, variance = mean.reshape(-1), variance.reshape(-1)
    sigma = np.sqrt(np.maximum(variance, 0.0))
    diff = mean - f_best
    out = np.maximum(diff, 0.0)
    pos = sigma > 0
    if pos.any():
        s, d = sigma[pos], diff[pos]
        z = d / s
        out[pos] = np.maximum(d * ndtr(z) + s * np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi), 0.0)
    return out.reshape(shape)


def expected_improvement(model: SurrogateForest, x: np.ndarray, f_best: float) -> float:
    mu, var = predict(model, x)
    return float(ei_from_moments(mu, var, f_best))


def q_hat(model, space: SearchSpace, prefix: Sequence[str], action: str, n_s: int,
          rng: np.random.Generator) -> float:
    """Mean surrogate prediction over ``n_s`` default samples from X(prefix + action)."""
    batch = sample_batch(space, tuple(prefix) + (action,), n_s, rng)
    means, _ = model.predict_many(batch.encode())
    return stable_mean(means)


def stable_mean(values) -> float:
    """Mean computed around the first value, so constant inputs come back exactly."""
    v = np.asarray(values, dtype=np.float64)
    return float(v[0] + np.mean(v - v[0]))


def softmax(values: Sequence[float]) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    e = np.exp(v - v.max())
    return e / e.sum()


def policy(model, space: SearchSpace, prefix: Sequence[str], actions: Sequence[str], n_s: int,
           rng: np.random.Generator) -> np.ndarray:
    """Softmax of the partial surrogate over ``actions``."""
    if not actions:
        raise ValueError("policy needs at least one action")
    return softmax([q_hat(model, space, prefix, a, n_s, rng) for a in actions])


class SurrogateModel:
    """Growing training set plus the forest most recently fit on it.

    ``version`` counts refits. With fewer than two rows the model predicts
    the mean observed reward (0 when empty) with zero variance.
    """

    def __init__(self, dim: int, params: ForestParams = ForestParams()):
        self.dim = dim
        self.params = params
        self._X = np.empty((64, dim))
        self._y = np.empty(64)
        self.n = 0
        self.forest: SurrogateForest | None = None
        self.version = 0

    @property
    def X(self) -> np.ndarray:
        return self._X[:self.n]

    @property
    def y(self) -> np.ndarray:
        return self._y[:self.n]

    def add(self, vector: np.ndarray, reward: float) -> None:
        if self.n == len(self._y):
            self._X = np.vstack([self._X, np.empty_like(self._X)])
            self._y = np.concatenate([self._y, np.empty_like(self._y)])
        self._X[self.n] = vector
        self._y[self.n] = reward
        self.n += 1

    def refit(self, rng: np.random.Generator) -> None:
        if self.n >= 2:
            self.forest = fit(self.X, self.y, self.params, rng)
            self.version += 1

    def predict_many(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if self.forest is not None:
            return self.forest.predict_many(X)
        m = np.asarray(X).shape[0]
        base = stable_mean(self.y) if self.n else 0.0
        return np.full(m, base), np.zeros(m)
