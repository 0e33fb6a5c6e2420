"""Synthetic benchmark problems with known optima.

The objective multiplies a structural score by a hyperparameter term
``floor + (1 - floor) * P``, where ``P`` averages per-hyperparameter
qualities. Both parts are non-separable. The scores of later steps depend on
the learner chosen at step 1. A learner's hyperparameter peaks depend on the
step-2 choice, and the peaks of later steps depend on the learner. Every
quality peaks at exactly 1, so the planted pipeline scores 1.0.

Problems in a family share one search space. Each derives its targets from
a family base perturbed by a small per-problem latent vector, which is also
exposed among the meta-features. Nearby latents therefore mean nearby optima.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
import numpy as np

from ..evaluation import Evaluator, Outcome
from ..space import (CATEGORICAL, CONTINUOUS, INTEGER, AlgorithmChoice, Condition, DecisionStep,
                     HyperparameterSpec as H, Pipeline, SearchSpace, count_pipelines,
                     enumerate_pipelines, is_discrete)

SUITES = ("desk100",)
META_FEATURES = ("n_steps", "log_n_structures", "n_hyperparameters", "n_continuous",
                 "n_categorical", "noise_std", "latent_0", "latent_1", "latent_2")
N_VALIDATION = 120
N_CLASSES = 3


def _algo(name, *hps, **defaults):
    return AlgorithmChoice(name, tuple(hps), dict(defaults))


def _step(index, *algos, default=None):
    return DecisionStep(index, tuple(algos), default)


def grid_space() -> SearchSpace:
    """Two steps, all-discrete, 150 configurations."""
    return SearchSpace("grid", (
        _step(1,
              _algo("tree", H.integer("max_depth", 1, 4), H.categorical("criterion", ["gini", "entropy", "log_loss"]),
                    max_depth=2, criterion="gini"),
              _algo("nb", H.categorical("var_smoothing", [1e-9, 1e-7, 1e-5, 1e-3, 1e-1]), var_smoothing=1e-9),
              _algo("knn", H.categorical("n_neighbors", [1, 5, 15]), H.integer("p", 1, 3),
                    n_neighbors=5, p=2),
              _algo("linear", H.categorical("C", [0.01, 0.1, 1.0, 10.0]), C=1.0)),
        _step(2,
              _algo("none"),
              _algo("scale", H.categorical("with_mean", [True, False]), with_mean=True),
              _algo("pca", H.integer("n_components", 2, 3), n_components=2)),
    ))


def lattice_space() -> SearchSpace:
    """Three steps, all-discrete, conditional hyperparameters and one forbidden pair (448 configurations)."""
    return SearchSpace("lattice", (
        _step(1,
              _algo("tree", H.integer("max_depth", 1, 6), H.categorical("criterion", ["gini", "entropy"]),
                    max_depth=3, criterion="gini"),
              _algo("knn", H.integer("n_neighbors", 1, 8), H.categorical("weights", ["uniform", "distance"]),
                    n_neighbors=4, weights="uniform"),
              _algo("svm", H.categorical("C", [0.1, 1.0, 10.0, 100.0]), H.categorical("kernel", ["rbf", "linear"]),
                    H.categorical("gamma", ["scale", "auto", "tiny"], condition=Condition("kernel", ("rbf",))),
                    C=1.0, kernel="rbf", gamma="scale"),
              _algo("linear", H.categorical("C", [0.01, 0.1, 1.0, 10.0]), C=1.0)),
        _step(2, _algo("none"), _algo("pca", H.integer("n_components", 1, 4), n_components=2)),
        _step(3, _algo("mean"), _algo("median")),
    ), forbidden=(((1, "linear"), (2, "pca")),))


def portfolio_space() -> SearchSpace:
    """Four steps (learner, preprocessor, scaler, imputer) over mixed, conditional domains."""
    return SearchSpace("portfolio", (
        _step(1,
              _algo("forest", H.integer("n_estimators", 10, 500), H.continuous("max_features", 0.1, 1.0),
                    H.categorical("criterion", ["gini", "entropy"]), H.categorical("bootstrap", [True, False]),
                    n_estimators=100, max_features=0.5, criterion="gini", bootstrap=True),
              _algo("svm", H.continuous("C", 0.01, 100.0), H.categorical("kernel", ["rbf", "poly", "linear"]),
                    H.continuous("gamma", 0.001, 1.0, condition=Condition("kernel", ("rbf", "poly"))),
                    H.integer("degree", 2, 5, condition=Condition("kernel", ("poly",))),
                    C=1.0, kernel="rbf", gamma=0.1, degree=3),
              _algo("knn", H.integer("n_neighbors", 1, 50, bias=[1.0 / k for k in range(1, 51)]),
                    H.categorical("weights", ["uniform", "distance"]), H.integer("p", 1, 2),
                    n_neighbors=5, weights="uniform", p=2),
              _algo("logreg", H.continuous("C", 0.01, 100.0), H.categorical("penalty", ["l2", "l1"]),
                    C=1.0, penalty="l2"),
              _algo("boosting", H.continuous("learning_rate", 0.01, 1.0), H.integer("max_depth", 1, 10),
                    H.integer("n_estimators", 10, 500), H.continuous("subsample", 0.5, 1.0),
                    learning_rate=0.1, max_depth=3, n_estimators=100, subsample=1.0)),
        _step(2,
              _algo("none"),
              _algo("pca", H.continuous("keep", 0.5, 0.99), H.categorical("whiten", [False, True]),
                    keep=0.95, whiten=False),
              _algo("select_k", H.continuous("fraction", 0.05, 1.0, bias=[4, 2, 1, 1]), fraction=0.5),
              _algo("poly", H.integer("degree", 2, 3), H.categorical("interaction_only", [False, True]),
                    degree=2, interaction_only=False)),
        _step(3, _algo("standard"), _algo("minmax"), _algo("robust", H.continuous("q_low", 0.01, 0.3), q_low=0.25)),
        _step(4, _algo("mean"), _algo("median")),
    ), forbidden=(((1, "logreg"), (2, "poly")), ((1, "knn"), (2, "poly"))))


@dataclass(frozen=True)
class Target:
    """Planted optimum of a non-separable objective.

    Structural scores of steps 2..l depend on the learner chosen at step 1.
    Learner hyperparameter peaks depend on the step-2 choice and the peaks of
    later steps depend on the learner, so no decision can be scored alone.
    """

    learner_scores: dict                         # algorithm -> s in (0, 1]
    step_scores: tuple[dict, ...]                # per later step: (learner, algorithm) -> s
    peaks: dict = field(default_factory=dict)   # (step, algorithm, hp, context) -> peak
    floor: float = 0.6


def _context(x_structure, i):
    if i == 0:
        return x_structure[1] if len(x_structure) > 1 else None
    return x_structure[0]


def _quality(h, value, peak) -> float:
    if h.kind == CATEGORICAL:
        for v, q in peak.items():
            if type(v) is type(value) and v == value:
                return q
        raise KeyError(value)
    best, width = peak
    z = (float(value) - float(best)) / ((h.upper - h.lower) * width)
    return math.exp(-0.5 * z * z)


def structure_score(target: Target, structure) -> float:
    s = target.learner_scores[structure[0]]
    for i, a in enumerate(structure[1:]):
        s *= target.step_scores[i][(structure[0], a)]
    return s


def objective_value(space: SearchSpace, target: Target, x: Pipeline) -> float:
    qs = []
    for i, (a, theta) in enumerate(zip(x.structure, x.theta)):
        algo = space.algorithm(i, a)
        ctx = _context(x.structure, i)
        for name, value in theta.items():
            qs.append(_quality(algo.hp(name), value, target.peaks[(i, a, name, ctx)]))
    p = sum(qs) / len(qs) if qs else 1.0
    return structure_score(target, x.structure) * (target.floor + (1.0 - target.floor) * p)


@dataclass(eq=False)
class SyntheticProblem:
    id: str
    family: str
    space: SearchSpace
    target: Target
    known_optimum: tuple[Pipeline, float]
    noise_std: float = 0.0
    latent: tuple[float, ...] = (0.0, 0.0, 0.0)
    meta: tuple[float, ...] = ()
    validation_targets: np.ndarray | None = None

    def objective(self, x: Pipeline) -> float:
        return objective_value(self.space, self.target, x)

    def evaluator(self, noise_seed: int = 0) -> "SyntheticEvaluator":
        return SyntheticEvaluator(self, noise_seed)


class SyntheticEvaluator(Evaluator):
    """Evaluates a problem's objective; noisy problems add clipped Gaussian noise.

    The noiseless value is reported under ``info["true_reward"]``. Validation
    predictions are pseudo-random class probabilities whose accuracy tracks
    the noiseless value, seeded by the pipeline itself.
    """

    def __init__(self, problem: SyntheticProblem, noise_seed: int = 0):
        self.problem = problem
        self._rng = np.random.default_rng(_digest(problem.id, "noise", noise_seed))

    def evaluate(self, pipeline, cutoff):
        true = self.problem.objective(pipeline)
        if self.problem.noise_std <= 0:
            return Outcome(true)
        noisy = float(np.clip(true + self._rng.normal(0.0, self.problem.noise_std), 0.0, 1.0))
        return Outcome(noisy, info={"true_reward": true})

    def validation_targets(self):
        return self.problem.validation_targets

    def validation_predictions(self, pipeline):
        y = self.problem.validation_targets
        acc = self.problem.objective(pipeline)
        rng = np.random.default_rng(_digest(self.problem.id, "val", repr(pipeline.key)))
        probs = rng.dirichlet(np.ones(N_CLASSES), size=len(y))
        correct = rng.random(len(y)) < acc
        top = probs.argmax(axis=1)
        for j in range(len(y)):
            want = y[j] if correct[j] else (y[j] + 1 + rng.integers(0, N_CLASSES - 1)) % N_CLASSES
            probs[j, [top[j], want]] = probs[j, [want, top[j]]]
        return probs


def _digest(*parts) -> int:
    h = hashlib.blake2b("|".join(map(str, parts)).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


# ---------------------------------------------------------------------------
# target construction


def _hp_items(space):
    for i, step in enumerate(space.steps):
        for algo in step.algorithms:
            for h in algo.hyperparameters:
                yield i, algo, h


def _contexts(space, i):
    if i == 0:
        return space.steps[1].names if space.n_steps > 1 else (None,)
    return space.steps[0].names


def _snap(h, value):
    """Nearest legal value of numeric ``h`` for a normalized position."""
    raw = h.lower + min(max(value, 0.0), 1.0) * (h.upper - h.lower)
    return int(round(raw)) if h.kind == INTEGER else raw


def _family_base(space, rng, target_algos, width_range, far_from_default=(), score_range=(0.8, 0.95),
                 step_range=(0.75, 0.97), context_shift=0.15, cat_keep=0.0,
                 cat_range=(0.3, 0.85)):
    learners = space.steps[0].names
    target_learner = target_algos[0]
    base = {"learner": {}, "steps": [], "centers": {}, "widths": {}, "cats": {}, "dirs": {}}
    for a in learners:
        base["learner"][a] = 1.0 if a == target_learner else float(rng.uniform(*score_range))
    for i, step in enumerate(space.steps[1:], start=1):
        table = {}
        for a in learners:
            # each learner has its own preferred algorithm at every later step
            liked = target_algos[i] if a == target_learner else step.names[int(rng.integers(0, len(step.names)))]
            for b in step.names:
                table[(a, b)] = 1.0 if b == liked else float(rng.uniform(*step_range))
        base["steps"].append(table)
    for i, algo, h in _hp_items(space):
        far = algo.name in far_from_default
        shared = float(rng.uniform(0.15, 0.85))
        if h.kind == CATEGORICAL:
            shared_best = int(rng.integers(0, len(h.values)))
            if far and shared_best == h.index_of(algo.default_theta[h.name]):
                shared_best = (shared_best + 1) % len(h.values)
            shared_rest = rng.uniform(*cat_range, size=len(h.values))
        for ctx in _contexts(space, i):
            key = (i, algo.name, h.name, ctx)
            if h.kind == CATEGORICAL:
                # the preferred value survives a context change with probability cat_keep
                best = shared_best
                if rng.random() >= cat_keep:
                    best = int(rng.integers(0, len(h.values)))
                rest = np.clip(shared_rest + rng.normal(0, 0.1, size=len(h.values)), 0.1, 0.9)
                base["cats"][key] = (best, rest)
                continue
            d0 = h.normalize(algo.default_theta[h.name])
            if far:
                side = [c for c in (d0 - 0.45, d0 + 0.45) if 0.02 <= c <= 0.98] or [1.0 - d0]
                c = float(side[int(rng.integers(0, len(side)))])
            elif far_from_default:
                c = float(np.clip(d0 + rng.normal(0, 0.08), 0.02, 0.98))  # decoys peak near their defaults
            else:
                c = float(np.clip(shared + rng.normal(0, context_shift), 0.02, 0.98))
            base["centers"][key] = c
            base["widths"][key] = float(rng.uniform(*width_range))
            base["dirs"][key] = rng.normal(size=3) / math.sqrt(3.0)
    return base


def _target_from_base(space, base, latent, floor, shift=0.05) -> Target:
    peaks = {}
    for i, algo, h in _hp_items(space):
        for ctx in _contexts(space, i):
            key = (i, algo.name, h.name, ctx)
            if h.kind == CATEGORICAL:
                best, rest = base["cats"][key]
                peaks[key] = {v: (1.0 if j == best else float(rest[j])) for j, v in enumerate(h.values)}
            else:
                c = base["centers"][key] + shift * float(base["dirs"][key] @ latent)
                peaks[key] = (_snap(h, float(np.clip(c, 0.0, 1.0))), base["widths"][key])
    return Target(dict(base["learner"]), tuple(dict(t) for t in base["steps"]), peaks, floor)


def planted_pipeline(space: SearchSpace, target: Target) -> Pipeline:
    structure = max(space.structures(), key=lambda st: structure_score(target, st))
    theta = []
    for i, a in enumerate(structure):
        algo = space.algorithm(i, a)
        ctx = _context(structure, i)
        best = {}
        for h in algo.hyperparameters:
            peak = target.peaks[(i, a, h.name, ctx)]
            best[h.name] = max(peak, key=peak.get) if h.kind == CATEGORICAL else peak[0]
        theta.append(algo.active_theta(best))
    return Pipeline(tuple(structure), tuple(theta))


def _meta(space, noise, latent) -> tuple[float, ...]:
    hps = [h for _, _, h in _hp_items(space)]
    n_struct = sum(1 for _ in space.structures())
    return (float(space.n_steps), math.log(n_struct), float(len(hps)),
            float(sum(h.kind == CONTINUOUS for h in hps)), float(sum(h.kind == CATEGORICAL for h in hps)),
            float(noise), *map(float, latent))


def _problem(pid, family, space, target, noise, latent, rng) -> SyntheticProblem:
    if is_discrete(space):
        # enumeration settles the optimum (and checks the planted one)
        best_x, best_v = None, -1.0
        for x in enumerate_pipelines(space):
            v = objective_value(space, target, x)
            if v > best_v:
                best_x, best_v = x, v
        optimum = (best_x, best_v)
    else:
        x = planted_pipeline(space, target)
        optimum = (x, objective_value(space, target, x))
    y = rng.integers(0, N_CLASSES, size=N_VALIDATION)
    return SyntheticProblem(pid, family, space, target, optimum, noise, tuple(map(float, latent)),
                            _meta(space, noise, latent), y)


def make_suite(name: str = "desk100", seed: int = 0) -> list[SyntheticProblem]:
    """Build a benchmark suite; ``desk100`` has ten problems in five families."""
    if name not in SUITES:
        raise ValueError(f"unknown suite '{name}'; available: {', '.join(SUITES)}")
    rng = np.random.default_rng(_digest(name, seed))
    problems = []

    def family(fam, space, n, target_algos, widths, floor, noises, shift=0.05, **kw):
        base = _family_base(space, rng, target_algos, widths, **kw)
        for j in range(n):
            latent = rng.normal(size=3)
            target = _target_from_base(space, base, latent, floor, shift)
            problems.append(_problem(f"{fam}-{j}", fam, space, target, noises[j], latent, rng))

    grid, lattice, portfolio = grid_space(), lattice_space(), portfolio_space()
    # small discrete spaces: clearly ranked structures and value preferences shared across contexts;
    # the larger latent shift moves integer peaks so siblings differ
    discrete = dict(floor=0.6, shift=0.25, score_range=(0.7, 0.85), step_range=(0.7, 0.85),
                    cat_range=(0.2, 0.5), cat_keep=1.0, context_shift=0.05)
    family("grid", grid, 2, ("knn", "pca"), (0.25, 0.45), noises=(0.0, 0.0), **discrete)
    family("lattice", lattice, 1, ("svm", "pca", "median"), (0.2, 0.4), noises=(0.0,), **discrete)
    family("portfolio", portfolio, 3, ("svm", "select_k", "robust", "median"), (0.12, 0.3), 0.5,
           (0.0, 0.0, 0.0))
    family("deceptive", portfolio, 2, ("boosting", "pca", "standard", "mean"), (0.1, 0.15), 0.45,
           (0.0, 0.0), far_from_default=("boosting",), score_range=(0.86, 0.92))
    family("noisy", portfolio, 2, ("forest", "none", "minmax", "median"), (0.12, 0.3), 0.5, (0.05, 0.1))
    return problems


def problem_by_id(problems, pid: str) -> SyntheticProblem:
    for p in problems:
        if p.id == pid:
            return p
    raise KeyError(f"no problem '{pid}' (have: {', '.join(p.id for p in problems)})")


def space_size(space: SearchSpace) -> int:
    return count_pipelines(space)
