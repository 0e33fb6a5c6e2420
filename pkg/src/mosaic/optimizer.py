"""Top-level search loop: initialization, repeated tree-walks, result assembly."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .ensemble import EnsembleWeights, PredictionMatrix, build_ensemble
from .evaluation import OK, EvaluationRecord, Evaluator, evaluate_with_cutoff
from .history import SearchState
from .mcts import MctsTree, SearchParams, cached_q, credit_initial, tree_walk
from .sampling import sample_default
from .space import (InadmissibleError, SearchSpace, check_pipeline, default_pipeline,
                    require_valid)
from .warmstart import Archive, nearest_datasets

log = logging.getLogger(__name__)

__all__ = [
    "OptimizerParams", "OptimizationResult", "InitializationError", "Budget",
    "initialize_vanilla", "initialize_metalearning", "run", "evaluate_with_cutoff",
    "incumbent_curve", "attach_ensemble",
]


class InitializationError(RuntimeError):
    pass


@dataclass(frozen=True)
class OptimizerParams:
    search: SearchParams = field(default_factory=SearchParams)
    kappa: int = 3
    max_evaluations: int | None = None
    wall_clock: float | None = None
    eval_cutoff: float = 300.0
    init_mode: str = "vanilla"
    archive: Archive | None = None
    meta_features: Sequence[float] | None = None
    k: int = 25
    ensemble: bool = False
    ensemble_size: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.max_evaluations is None and self.wall_clock is None:
            raise ValueError("set max_evaluations and/or wall_clock")
        if self.max_evaluations is not None and self.max_evaluations < 0:
            raise ValueError("max_evaluations must be >= 0")
        if self.wall_clock is not None and not self.wall_clock > 0:
            raise ValueError("wall_clock must be > 0")
        if self.kappa < 0:
            raise ValueError("kappa must be >= 0")
        if not self.eval_cutoff > 0:
            raise ValueError("eval_cutoff must be > 0")
        if self.init_mode not in ("vanilla", "metalearning"):
            raise ValueError("init_mode must be 'vanilla' or 'metalearning'")
        if self.init_mode == "metalearning" and self.meta_features is None:
            raise ValueError("metalearning needs meta_features")
        if self.k < 1 or self.ensemble_size < 1:
            raise ValueError("k and ensemble_size must be >= 1")


@dataclass
class OptimizationResult:
    best: EvaluationRecord | None
    history: list[EvaluationRecord]
    incumbent_curve: list[tuple[int, float]]
    ensemble_weights: EnsembleWeights | None = None
    truncated: bool = False
    warnings: list[str] = field(default_factory=list)
    n_init: int = 0
    tree: MctsTree | None = None


class Budget:
    """Evaluation-count and wall-clock limits, checked before each evaluation."""

    def __init__(self, max_evaluations: int | None = None, wall_clock: float | None = None):
        self.max_evaluations = max_evaluations
        self.wall_clock = wall_clock
        self.start = time.monotonic()
        self.refused = False  # an evaluation was wanted but not granted

    def allows(self, n_done: int) -> bool:
        if self.max_evaluations is not None and n_done >= self.max_evaluations:
            return False
        if self.wall_clock is not None and time.monotonic() - self.start >= self.wall_clock:
            return False
        return True


class _Feeder:
    # evaluates pipelines into a state until the budget runs out
    def __init__(self, state: SearchState, evaluator: Evaluator, cutoff: float, budget: Budget | None):
        self.state, self.evaluator, self.cutoff = state, evaluator, cutoff
        self.budget = budget

    def __call__(self, pipeline) -> EvaluationRecord | None:
        if self.budget is not None and not self.budget.allows(len(self.state)):
            self.budget.refused = True
            return None
        rec = evaluate_with_cutoff(self.evaluator, pipeline, self.cutoff, walk_index=len(self.state))
        self.state.add(rec)
        return rec


def _vanilla_for(space, algorithms, kappa, feed: _Feeder, rng, warnings) -> list[EvaluationRecord]:
    records = []
    for a in algorithms:
        if not space.completable((a,)):
            warnings.append(f"step-1 algorithm '{a}' has no admissible completion; skipped")
            continue
        batch = []
        try:
            batch.append(default_pipeline(space, a))
        except InadmissibleError as exc:
            warnings.append(f"default pipeline of '{a}' skipped: {exc}")
        batch.extend(sample_default(space, (a,), rng) for _ in range(kappa))
        for x in batch:
            rec = feed(x)
            if rec is None:
                return records
            records.append(rec)
    return records


def _finish_init(state: SearchState, records, tree: MctsTree | None, rng) -> dict[str, float]:
    if records and all(r.status != OK for r in records):
        raise InitializationError("initialization failed: every initial evaluation failed")
    state.model.refit(rng)
    root_q = {}
    params = tree.params if tree is not None else SearchParams()
    node = tree.root if tree is not None else MctsTree(state.space, params).root
    for a in state.space.viable_actions(()):
        root_q[a] = cached_q(node, a, state.model, state.space, params, rng, 1)
    if tree is not None:
        credit_initial(tree, records, state.model, rng)
    return root_q


def initialize_vanilla(space: SearchSpace, evaluator: Evaluator, kappa: int, rng: np.random.Generator,
                       state: SearchState | None = None, tree: MctsTree | None = None,
                       cutoff: float = 300.0, budget: Budget | None = None,
                       warnings: list[str] | None = None):
    """Default pipeline plus ``kappa`` samples below each step-1 algorithm.

    Returns ``(records, state, root_q)``: the surrogate in ``state`` is fit
    once on all records and ``root_q`` maps each step-1 algorithm to its
    partial surrogate value (also cached on ``tree.root`` when given).
    """
    if state is None:
        state = SearchState(space, tree.params.forest if tree else SearchParams().forest)
    warnings = [] if warnings is None else warnings
    feed = _Feeder(state, evaluator, cutoff, budget)
    records = _vanilla_for(space, space.viable_actions(()), kappa, feed, rng, warnings)
    root_q = _finish_init(state, records, tree, rng)
    return records, state, root_q


def initialize_metalearning(archive: Archive | None, dataset_meta, k: int, space: SearchSpace,
                            evaluator: Evaluator, rng: np.random.Generator, kappa: int = 3,
                            state: SearchState | None = None, tree: MctsTree | None = None,
                            cutoff: float = 300.0, budget: Budget | None = None,
                            warnings: list[str] | None = None):
    """Evaluate the best pipelines of the ``k`` nearest archived datasets, then
    top up with vanilla initialization for step-1 algorithms still uncovered."""
    if state is None:
        state = SearchState(space, tree.params.forest if tree else SearchParams().forest)
    warnings = [] if warnings is None else warnings
    feed = _Feeder(state, evaluator, cutoff, budget)
    records = []
    if archive is None or not len(archive):
        warnings.append("empty archive: falling back to vanilla initialization")
        neighbours = []
    else:
        neighbours = nearest_datasets(archive, dataset_meta, k)
    seen = set()
    for entry in neighbours:
        x = entry.pipeline
        if x in seen:
            continue
        seen.add(x)
        problems = check_pipeline(space, x)
        if problems:
            warnings.append(f"archive pipeline of '{entry.id}' skipped: {problems[0]}")
            continue
        rec = feed(x)
        if rec is None:
            break
        records.append(rec)
    if budget is None or not budget.refused:
        covered = {r.pipeline.structure[0] for r in records}
        todo = [a for a in space.viable_actions(()) if a not in covered]
        records += _vanilla_for(space, todo, kappa, feed, rng, warnings)
    root_q = _finish_init(state, records, tree, rng)
    return records, state, root_q


def incumbent_curve(history: Sequence[EvaluationRecord]) -> list[tuple[int, float]]:
    out, best = [], -np.inf
    for rec in history:
        best = max(best, rec.reward)
        out.append((rec.walk_index, float(best)))
    return out


def best_record(history: Sequence[EvaluationRecord]) -> EvaluationRecord | None:
    best = None
    for rec in history:
        if best is None or rec.reward > best.reward:
            best = rec
    return best


def attach_ensemble(result: OptimizationResult, evaluator: Evaluator, size: int) -> None:
    """Fill ``result.ensemble_weights`` (keyed by history position) when the evaluator allows it."""
    targets = evaluator.validation_targets()
    cands = [i for i, r in enumerate(result.history) if r.status == OK]
    rows = [evaluator.validation_predictions(result.history[i].pipeline) for i in cands] if targets is not None else []
    if targets is None or not cands or any(r is None for r in rows):
        result.warnings.append("evaluator exposes no validation predictions: ensemble skipped")
        return
    w = build_ensemble(PredictionMatrix(np.stack(rows), targets), size)
    result.ensemble_weights = EnsembleWeights({cands[i]: v for i, v in w.weights.items()}, w.size, w.score)


def run(space: SearchSpace, evaluator: Evaluator, params: OptimizerParams) -> OptimizationResult:
    require_valid(space)
    rng = np.random.default_rng(params.seed)
    budget = Budget(params.max_evaluations, params.wall_clock)
    tree = MctsTree(space, params.search)
    state = SearchState(space, params.search.forest)
    warnings: list[str] = []
    common = dict(state=state, tree=tree, cutoff=params.eval_cutoff, budget=budget, warnings=warnings)
    if params.init_mode == "metalearning":
        records, _, _ = initialize_metalearning(params.archive, params.meta_features, params.k, space,
                                                evaluator, rng, params.kappa, **common)
    else:
        records, _, _ = initialize_vanilla(space, evaluator, params.kappa, rng, **common)
    n_init = len(records)
    truncated = budget.refused
    while budget.allows(len(state)):
        tree_walk(tree, state, evaluator, params.search, rng, params.eval_cutoff)
    result = OptimizationResult(state.best, list(state.history), incumbent_curve(state.history),
                                truncated=truncated, warnings=warnings, n_init=n_init, tree=tree)
    if params.ensemble:
        attach_ensemble(result, evaluator, params.ensemble_size)
    return result

