"""Monte-Carlo tree search over pipeline structures.

Each tree node is a structure prefix. A walk descends by the policy-weighted
selection rule, adds at most one child when progressive widening allows
(picking the unexpanded action with the best partial surrogate), completes the
reached prefix into a full pipeline by maximizing Expected Improvement over a
candidate pool, evaluates it and back-propagates the reward.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .encoding import encode_many
from .evaluation import Evaluator, EvaluationRecord, evaluate_with_cutoff
from .history import SearchState
from .sampling import neighbors, sample_batch, sample_default
from .space import Pipeline, SearchSpace, compatible
from .surrogate import ForestParams, ei_from_moments, q_hat, softmax

SELECTION_RULES = ("alphazero", "ucb")
PLAYOUT_STRATEGIES = ("ei_mixed", "default_only", "local_only")


@dataclass(frozen=True)
class SearchParams:
    c_ucb: float = 1.3
    pw: float = 0.6
    n_s: int = 100
    n_r: int = 1000
    eps: float = 0.2
    selection_rule: str = "alphazero"
    playout_strategy: str = "ei_mixed"
    n_local: int = 4          # perturbations per continuous hyperparameter
    pi_refresh: int = 10      # surrogate retrains between policy refreshes
    pi_over: str = "expanded"  # or "all": softmax over every admissible action
    forest: ForestParams = field(default_factory=ForestParams)

    def __post_init__(self):
        if not self.c_ucb > 0:
            raise ValueError("c_ucb must be > 0")
        if not 0 < self.pw <= 1:
            raise ValueError("pw must lie in (0, 1]")
        for name in ("n_s", "n_r", "n_local", "pi_refresh"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.eps < 0:
            raise ValueError("eps must be >= 0")
        if self.selection_rule not in SELECTION_RULES:
            raise ValueError(f"selection_rule must be one of {SELECTION_RULES}")
        if self.playout_strategy not in PLAYOUT_STRATEGIES:
            raise ValueError(f"playout_strategy must be one of {PLAYOUT_STRATEGIES}")
        if self.pi_over not in ("expanded", "all"):
            raise ValueError("pi_over must be 'expanded' or 'all'")


@dataclass(eq=False)
class MctsNode:
    prefix: tuple[str, ...]
    n_visits: int = 0
    rewards: list[float] = field(default_factory=list)  # kept sorted
    children: dict[str, "MctsNode"] = field(default_factory=dict)
    n_playouts: int = 0
    q_cache: dict[str, tuple[float, int]] = field(default_factory=dict)  # action -> (Q, model version)

    def median(self) -> float:
        r = self.rewards
        n = len(r)
        if n == 0:
            return 0.0
        mid = n // 2
        return r[mid] if n % 2 else (r[mid - 1] + r[mid]) / 2.0

    def mean(self) -> float:
        return sum(self.rewards) / len(self.rewards) if self.rewards else 0.0

    def record(self, reward: float) -> None:
        self.n_visits += 1
        bisect.insort(self.rewards, reward)

    def walk(self):
        yield self
        for child in self.children.values():
            yield from child.walk()


@dataclass(eq=False)
class MctsTree:
    space: SearchSpace
    params: SearchParams = field(default_factory=SearchParams)
    root: MctsNode = field(default_factory=lambda: MctsNode(()))

    def nodes(self):
        return self.root.walk()


def argmax_random(values, rng: np.random.Generator) -> int:
    """Index of the maximum; exact ties broken uniformly with ``rng``."""
    values = np.asarray(values, dtype=np.float64)
    hits = np.flatnonzero(values == values.max())
    if hits.size == 1:
        return int(hits[0])
    return int(hits[rng.integers(0, hits.size)])


def alphazero_scores(medians, pi, n_parent: int, n_children, c_ucb: float) -> np.ndarray:
    medians = np.asarray(medians, dtype=np.float64)
    pi = np.asarray(pi, dtype=np.float64)
    n_children = np.asarray(n_children, dtype=np.float64)
    return medians + c_ucb * pi * math.sqrt(n_parent) / (1.0 + n_children)


def ucb_scores(means, n_parent: int, n_children, c_ucb: float) -> np.ndarray:
    """UCB1 scores; children never visited score +inf."""
    means = np.asarray(means, dtype=np.float64)
    n_children = np.asarray(n_children, dtype=np.float64)
    out = np.full(means.shape, np.inf)
    seen = n_children > 0
    log_n = math.log(max(n_parent, 1))
    out[seen] = means[seen] + c_ucb * np.sqrt(log_n / n_children[seen])
    return out


def pw_allows_expansion(n_visits: int, n_children: int, pw: float) -> bool:
    """Progressive widening: a node may hold ``floor(max(n, 1) ** pw)`` children."""
    # the epsilon keeps exact integer powers (e.g. 1000 ** (1/3)) from flooring down
    return math.floor(max(n_visits, 1) ** pw + 1e-9) > n_children


def cached_q(node: MctsNode, action: str, model, space: SearchSpace, params: SearchParams,
             rng: np.random.Generator, max_age: int) -> float:
    """Q(prefix, action), recomputed once the cached value is ``max_age`` refits old."""
    hit = node.q_cache.get(action)
    if hit is not None and model.version - hit[1] < max_age:
        return hit[0]
    q = q_hat(model, space, node.prefix, action, params.n_s, rng)
    node.q_cache[action] = (q, model.version)
    return q


def node_policy(node: MctsNode, model, space: SearchSpace, params: SearchParams,
                rng: np.random.Generator) -> np.ndarray:
    """Policy over the expanded children of ``node`` (in expansion order)."""
    expanded = list(node.children)
    actions = list(space.viable_actions(node.prefix)) if params.pi_over == "all" else expanded
    qs = [cached_q(node, a, model, space, params, rng, params.pi_refresh) for a in actions]
    pi = dict(zip(actions, softmax(qs)))
    return np.array([pi[a] for a in expanded])


def select_child(node: MctsNode, model, space: SearchSpace, params: SearchParams,
                 rng: np.random.Generator) -> str:
    if not node.children:
        raise ValueError("select on leaf: node has no expanded children")
    actions = list(node.children)
    if len(actions) == 1:
        return actions[0]
    kids = [node.children[a] for a in actions]
    visits = [k.n_visits for k in kids]
    if params.selection_rule == "ucb":
        scores = ucb_scores([k.mean() for k in kids], node.n_visits, visits, params.c_ucb)
    else:
        pi = node_policy(node, model, space, params, rng)
        scores = alphazero_scores([k.median() for k in kids], pi, node.n_visits, visits, params.c_ucb)
    return actions[argmax_random(scores, rng)]


def expand(node: MctsNode, model, space: SearchSpace, params: SearchParams,
           rng: np.random.Generator) -> str:
    """Add the unexpanded admissible action with the highest partial surrogate."""
    candidates = [a for a in space.viable_actions(node.prefix) if a not in node.children]
    if not candidates:
        raise ValueError(f"no unexpanded action at prefix {list(node.prefix)}")
    if len(candidates) == 1:
        action = candidates[0]
    else:
        # values computed under the current surrogate are reused as is
        qs = [cached_q(node, a, model, space, params, rng, 1) for a in candidates]
        action = candidates[argmax_random(qs, rng)]
    node.children[action] = MctsNode(node.prefix + (action,))
    return action


def playout(prefix: Sequence[str], model, space: SearchSpace, incumbent: EvaluationRecord | None,
            params: SearchParams, rng: np.random.Generator, f_best: float | None = None,
            exclude: set | None = None) -> Pipeline:
    """Complete ``prefix`` into a full pipeline.

    The default strategy scores ``n_r`` default samples from X(prefix) plus the
    neighbors of ``incumbent`` that stay in X(prefix) by Expected Improvement
    over ``incumbent``'s reward (``f_best`` when there is no incumbent) and
    returns the maximizer. Candidates whose encoding is in ``exclude`` are
    skipped unless nothing else is left.
    """
    prefix = tuple(prefix)
    strategy = params.playout_strategy
    if strategy == "default_only":
        return sample_default(space, prefix, rng)
    local = []
    if incumbent is not None:
        local = [x for x in neighbors(space, incumbent.pipeline, params.eps, params.n_local, rng)
                 if compatible(prefix, x)]
    if strategy == "local_only":
        if not local:
            return sample_default(space, prefix, rng)
        means, _ = model.predict_many(encode_many(space, local))
        return local[argmax_random(means, rng)]

    batch = sample_batch(space, prefix, params.n_r, rng)
    pool = batch.encode()
    if local:
        pool = np.vstack([pool, encode_many(space, local)])
    if incumbent is not None:
        target = incumbent.reward
    else:
        target = 0.0 if f_best is None else f_best
    mu, var = model.predict_many(pool)
    ei = ei_from_moments(mu, var, target)
    if exclude:
        ei = ei.copy()
        while True:
            pick = argmax_random(ei, rng)
            if ei[pick] == -np.inf:
                ei = ei_from_moments(mu, var, target)
                pick = argmax_random(ei, rng)
                break
            row = pool[pick]
            if row.tobytes() not in exclude:
                break
            ei[(pool == row).all(axis=1)] = -np.inf
    else:
        pick = argmax_random(ei, rng)
    return batch.pipeline(pick) if pick < len(batch) else local[pick - len(batch)]


def backpropagate(tree: MctsTree, path: Sequence[MctsNode], reward: float) -> None:
    if not 0.0 <= reward <= 1.0:
        raise ValueError("reward must lie in [0, 1]")
    if not path or path[0] is not tree.root:
        raise ValueError("path must start at the root")
    for node in path:
        node.record(reward)


def credit_initial(tree: MctsTree, records, model, rng: np.random.Generator) -> None:
    """Count initial evaluations as playouts launched below the root.

    Step-1 nodes are expanded by the usual argmax-Q rule, as many as
    progressive widening allows at the credited visit count; records whose
    algorithm got no node count as playouts at the root itself.
    """
    root, space = tree.root, tree.space
    n = root.n_visits + len(records)
    while (any(a not in root.children for a in space.viable_actions(()))
           and math.floor(max(n, 1) ** tree.params.pw + 1e-9) > len(root.children)):
        expand(root, model, space, tree.params, rng)
    for rec in records:
        child = root.children.get(rec.pipeline.structure[0])
        if child is None:
            root.record(rec.reward)
            root.n_playouts += 1
        else:
            backpropagate(tree, [root, child], rec.reward)
            child.n_playouts += 1


def descend(tree: MctsTree, model, params: SearchParams, rng: np.random.Generator) -> list[MctsNode]:
    """Selection and expansion phases: the root-to-leaf path of one walk."""
    space = tree.space
    node = tree.root
    path = [node]
    while len(node.prefix) < space.n_steps:
        viable = space.viable_actions(node.prefix)
        has_unexpanded = any(a not in node.children for a in viable)
        if has_unexpanded and pw_allows_expansion(node.n_visits, len(node.children), params.pw):
            action = expand(node, model, space, params, rng)
            path.append(node.children[action])
            break
        node = node.children[select_child(node, model, space, params, rng)]
        path.append(node)
    return path


def tree_walk(tree: MctsTree, state: SearchState, evaluator: Evaluator, params: SearchParams,
              rng: np.random.Generator, cutoff: float = 300.0) -> EvaluationRecord:
    """One full iteration: descend, play out, evaluate, back-propagate, retrain."""
    path = descend(tree, state.model, params, rng)
    leaf = path[-1]
    x = playout(leaf.prefix, state.model, tree.space, state.incumbent(leaf.prefix), params, rng,
                f_best=state.best_reward, exclude=state.evaluated)
    record = evaluate_with_cutoff(evaluator, x, cutoff, walk_index=len(state))
    backpropagate(tree, path, record.reward)
    leaf.n_playouts += 1
    state.observe(record, rng)
    return record
