"""Comparison optimizers sharing the record format of :func:`mosaic.optimizer.run`."""
from __future__ import annotations

import numpy as np

from ..evaluation import Evaluator, evaluate_with_cutoff
from ..history import SearchState
from ..mcts import MctsTree, SearchParams, playout
from ..optimizer import Budget, OptimizationResult, OptimizerParams, incumbent_curve, initialize_vanilla
from ..sampling import sample_default
from ..space import SearchSpace, require_valid


def _result(state: SearchState, n_init=0, truncated=False, warnings=None) -> OptimizationResult:
    return OptimizationResult(state.best, list(state.history), incumbent_curve(state.history),
                              truncated=truncated, warnings=warnings or [], n_init=n_init)


def run_baseline_random(space: SearchSpace, evaluator: Evaluator, budget: int, seed: int = 0,
                        cutoff: float = 300.0) -> OptimizationResult:
    """``budget`` pipelines drawn i.i.d. from the default distribution."""
    require_valid(space)
    rng = np.random.default_rng(seed)
    state = SearchState(space)
    for _ in range(budget):
        x = sample_default(space, (), rng)
        state.add(evaluate_with_cutoff(evaluator, x, cutoff, walk_index=len(state)))
    return _result(state)


def run_baseline_bo(space: SearchSpace, evaluator: Evaluator, budget: int,
                    params: OptimizerParams | SearchParams | None = None, seed: int = 0) -> OptimizationResult:
    """Surrogate-based optimization without a tree.

    Same initialization as the tree search, then every iteration evaluates the
    EI maximizer of a pool of default samples from the whole space plus the
    neighbors of the global incumbent.
    """
    require_valid(space)
    if isinstance(params, OptimizerParams):
        search, kappa, cutoff = params.search, params.kappa, params.eval_cutoff
    else:
        search, kappa, cutoff = params or SearchParams(), 3, 300.0
    rng = np.random.default_rng(seed)
    limit = Budget(budget)
    state = SearchState(space, search.forest)
    warnings: list[str] = []
    records, _, _ = initialize_vanilla(space, evaluator, kappa, rng, state=state, tree=MctsTree(space, search),
                                       cutoff=cutoff, budget=limit, warnings=warnings)
    while limit.allows(len(state)):
        x = playout((), state.model, space, state.best, search, rng, f_best=state.best_reward,
                    exclude=state.evaluated)
        state.observe(evaluate_with_cutoff(evaluator, x, cutoff, walk_index=len(state)), rng)
    return _result(state, len(records), limit.refused, warnings)
