import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mosaic.encoding import encode_many, layout
from mosaic.evaluation import FunctionEvaluator
from mosaic.history import SearchState
from mosaic.mcts import (MctsNode, MctsTree, SearchParams, alphazero_scores, backpropagate, expand,
                         pw_allows_expansion, playout, select_child, tree_walk, ucb_scores)
from mosaic.optimizer import initialize_vanilla
from mosaic.sampling import sample_batch
from mosaic.space import HyperparameterSpec as H, Pipeline, SearchSpace, enumerate_pipelines
from mosaic.surrogate import ei_from_moments

from .conftest import algo, bandit_space, mixed_space, single_space, step, toy_space, toy_table


class Stub:
    """Surrogate stand-in with a fixed version and a per-row function."""

    def __init__(self, fn, version=1):
        self.fn = fn
        self.version = version

    def predict_many(self, X):
        return np.array([self.fn(r) for r in X], dtype=float), np.zeros(len(X))


def const(c):
    return Stub(lambda r: c)


def two_child_node(q_a, q_b, n_a, n_b, rewards_a, rewards_b, version=1):
    node = MctsNode(())
    node.children = {"a": MctsNode(("a",)), "b": MctsNode(("b",))}
    for r in rewards_a:
        node.children["a"].record(r)
    for r in rewards_b:
        node.children["b"].record(r)
    node.n_visits = n_a + n_b
    node.q_cache = {"a": (q_a, version), "b": (q_b, version)}
    return node


# selection

def test_alphazero_example_scores():
    s = alphazero_scores([0.5, 0.5], [0.8, 0.2], 4, [2, 2], 1.3)
    assert abs(s[0] - (0.5 + 1.3 * 0.8 * 2 / 3)) <= 1e-9
    assert abs(s[0] - 1.1933333333333334) <= 1e-9
    assert abs(s[1] - 0.6733333333333333) <= 1e-9


def test_select_child_alphazero_example():
    space = bandit_space()
    space = SearchSpace("ab", (step(1, algo("a"), algo("b")),))
    # pi = softmax(ln 4, 0) = (0.8, 0.2)
    node = two_child_node(math.log(4), 0.0, 2, 2, [0.4, 0.6], [0.5, 0.5])
    assert node.children["a"].median() == 0.5
    assert select_child(node, const(0.0), space, SearchParams(), np.random.default_rng(0)) == "a"


def test_ucb_example_score():
    s = ucb_scores([0.5], 10, [5], 1.3)
    assert abs(s[0] - (0.5 + 1.3 * math.sqrt(math.log(10) / 5))) <= 1e-9
    assert round(float(s[0]), 3) == 1.382


def test_ucb_prefers_unvisited():
    s = ucb_scores([0.9, 0.0], 5, [5, 0], 1.3)
    assert s[1] == math.inf and s[0] < math.inf


def test_single_child_and_leaf():
    space = SearchSpace("ab", (step(1, algo("a"), algo("b")),))
    node = MctsNode(())
    with pytest.raises(ValueError, match="select on leaf"):
        select_child(node, const(0.0), space, SearchParams(), np.random.default_rng(0))
    node.children["b"] = MctsNode(("b",))
    assert select_child(node, const(0.0), space, SearchParams(), np.random.default_rng(0)) == "b"


def test_tie_break_is_uniform():
    space = SearchSpace("ab", (step(1, algo("a"), algo("b")),))
    node = two_child_node(0.0, 0.0, 1, 1, [0.5], [0.5])
    rng = np.random.default_rng(0)
    picks = [select_child(node, const(0.0), space, SearchParams(), rng) for _ in range(2000)]
    assert abs(picks.count("a") / 2000 - 0.5) < 0.05


@settings(max_examples=100, deadline=None)
@given(data=st.data(), k=st.integers(2, 6))
def test_alphazero_argmax_invariant_under_reordering(data, k):
    med = data.draw(st.lists(st.floats(0, 1), min_size=k, max_size=k))
    pi = np.array(data.draw(st.lists(st.floats(0.01, 1), min_size=k, max_size=k)))
    pi = pi / pi.sum()
    n = data.draw(st.lists(st.integers(0, 50), min_size=k, max_size=k))
    perm = data.draw(st.permutations(range(k)))
    s = alphazero_scores(med, pi, sum(n) + 1, n, 1.3)
    sp = alphazero_scores([med[i] for i in perm], pi[list(perm)], sum(n) + 1, [n[i] for i in perm], 1.3)
    assert np.array_equal(s[list(perm)], sp)


# progressive widening

@pytest.mark.parametrize("n, children, expected", [(1, 0, True), (3, 1, False), (4, 1, True), (0, 0, True)])
def test_pw_examples(n, children, expected):
    assert pw_allows_expansion(n, children, 0.6) is expected


# expansion

def test_expand_single_candidate():
    space = SearchSpace("ab", (step(1, algo("a"), algo("b")),))
    node = MctsNode(())
    node.children["a"] = MctsNode(("a",))
    assert expand(node, const(0.3), space, SearchParams(), np.random.default_rng(0)) == "b"
    with pytest.raises(ValueError):
        expand(node, const(0.3), space, SearchParams(), np.random.default_rng(0))


def test_expand_constant_surrogate_is_uniform():
    space = SearchSpace("abc", (step(1, algo("a"), algo("b"), algo("c")),))
    counts = {"a": 0, "b": 0, "c": 0}
    rng = np.random.default_rng(1)
    for _ in range(1500):
        counts[expand(MctsNode(()), const(0.5), space, SearchParams(n_s=5), rng)] += 1
    assert all(abs(v / 1500 - 1 / 3) < 0.05 for v in counts.values())


def test_expand_picks_higher_partial_surrogate():
    space = SearchSpace("ab", (step(1, algo("a", H.categorical("c", [0, 1]), c=0),
                                   algo("b", H.categorical("c", [0, 1]), c=0)),))
    lay = layout(space)
    table = {"a": (0.1, 0.3), "b": (0.4, 0.8)}   # subspace means 0.2 and 0.6

    def f(row):
        for name in ("a", "b"):
            slot = lay.slots[0, name, "c"]
            block = row[slot.column:slot.column + slot.width]
            if block.max() == 1.0:
                return table[name][int(block.argmax())]

    hits = sum(expand(MctsNode(()), Stub(f), space, SearchParams(n_s=100), np.random.default_rng(s)) == "b"
               for s in range(100))
    assert hits >= 95


# playout

def test_playout_pool_of_one():
    space = SearchSpace("one", (step(1, algo("only")),))
    x = playout((), const(0.0), space, None, SearchParams(n_r=1), np.random.default_rng(0))
    assert x == Pipeline(("only",), ({},))


def test_playout_with_exact_surrogate_matches_brute_force():
    space = SearchSpace("six", (step(1, algo("a", H.categorical("c", [0, 1, 2]), c=0),
                                    algo("b", H.categorical("c", [0, 1, 2]), c=0)),))
    xs = list(enumerate_pipelines(space))
    values = dict(zip(xs, [0.2, 0.5, 0.35, 0.9, 0.1, 0.6]))
    rows = {encode_many(space, [x])[0].tobytes(): v for x, v in values.items()}
    model = Stub(lambda r: rows[r.tobytes()])
    f_best = 0.4
    brute = max(xs, key=lambda x: max(0.0, values[x] - f_best))
    for seed in range(10):
        assert playout((), model, space, None, SearchParams(n_r=200), np.random.default_rng(seed),
                       f_best=f_best) == brute


def test_playout_without_incumbent_uses_default_samples_only():
    space = mixed_space()
    rng_a, rng_b = np.random.default_rng(3), np.random.default_rng(3)
    model = Stub(lambda r: float(r.sum()))
    x = playout((), model, space, None, SearchParams(n_r=50), rng_a, f_best=0.0)
    batch = sample_batch(space, (), 50, rng_b)
    mu, var = model.predict_many(batch.encode())
    assert x == batch.pipeline(int(np.argmax(ei_from_moments(mu, var, 0.0))))


def test_playout_respects_prefix_and_exclusion():
    space = toy_space()
    model = const(0.5)
    rng = np.random.default_rng(0)
    seen = set()
    for _ in range(3):
        x = playout(("a", "p"), model, space, None, SearchParams(n_r=100), rng, f_best=0.0, exclude=seen)
        assert x.structure == ("a", "p")
        seen.add(encode_many(space, [x])[0].tobytes())
    assert len(seen) == 3
    # everything excluded: fall back to the full pool
    x = playout(("a", "p"), model, space, None, SearchParams(n_r=100), rng, f_best=0.0, exclude=seen)
    assert x.structure == ("a", "p")


# back-propagation

def test_median_conventions():
    node = MctsNode(())
    node.record(0.3)
    assert node.median() == 0.3
    node = MctsNode(())
    for r in (0.2, 0.4, 0.9):
        node.record(r)
    assert node.median() == 0.4
    node = MctsNode(())
    for r in (0.2, 0.4):
        node.record(r)
    assert node.median() == pytest.approx(0.3)


def test_backpropagate_touches_only_path():
    tree = MctsTree(toy_space(), SearchParams())
    a = tree.root.children["a"] = MctsNode(("a",))
    b = tree.root.children["b"] = MctsNode(("b",))
    backpropagate(tree, [tree.root, a], 0.7)
    assert (tree.root.n_visits, a.n_visits, b.n_visits) == (1, 1, 0)
    with pytest.raises(ValueError):
        backpropagate(tree, [tree.root], 1.5)
    with pytest.raises(ValueError):
        backpropagate(tree, [a], 0.5)


# tree walks

def test_single_walk_on_single_algorithm():
    space = single_space(continuous=False)
    tree = MctsTree(space, SearchParams())
    state = SearchState(space)
    tree_walk(tree, state, FunctionEvaluator(lambda x: 0.7), SearchParams(), np.random.default_rng(0))
    assert tree.root.n_visits == 1 and tree.root.median() == 0.7


def test_walk_count_equals_records():
    space = mixed_space()
    tree = MctsTree(space, SearchParams(n_r=50, n_s=10))
    state = SearchState(space)
    calls = iter(range(1000))

    def fn(x):
        if next(calls) % 3 == 0:
            raise RuntimeError("crash")
        return 0.5

    rng = np.random.default_rng(0)
    for _ in range(12):
        tree_walk(tree, state, FunctionEvaluator(fn), tree.params, rng)
    assert len(state) == 12
    assert sum(r.status == "failed" for r in state.history) == 4
    assert tree.root.n_visits == 12


def _check_tree(tree):
    for node in tree.nodes():
        assert node.n_visits == len(node.rewards)
        assert node.n_visits == sum(c.n_visits for c in node.children.values()) + node.n_playouts
        assert len(node.children) <= math.floor(max(node.n_visits, 1) ** tree.params.pw) + 1
        if node.rewards:
            assert min(node.rewards) <= node.median() <= max(node.rewards)
        assert len(node.prefix) <= tree.space.n_steps
        for a, child in node.children.items():
            assert child.prefix == node.prefix + (a,)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 25), pw=st.sampled_from([0.3, 0.6, 1.0]),
       rule=st.sampled_from(["alphazero", "ucb"]))
def test_visit_invariants(seed, n, pw, rule):
    space = mixed_space()
    params = SearchParams(pw=pw, selection_rule=rule, n_r=30, n_s=8)
    tree = MctsTree(space, params)
    rng = np.random.default_rng(seed)
    state = SearchState(space, params.forest)
    initialize_vanilla(space, FunctionEvaluator(lambda x: float(rng.random())), 1, rng, state=state, tree=tree)
    noise = np.random.default_rng(seed + 1)
    for _ in range(n):
        tree_walk(tree, state, FunctionEvaluator(lambda x: float(noise.random())), params, rng)
    _check_tree(tree)


def test_initial_records_credited_to_step1_nodes():
    space = mixed_space()
    tree = MctsTree(space, SearchParams(n_s=10))
    records, state, _ = initialize_vanilla(space, FunctionEvaluator(lambda x: 0.5), 3, np.random.default_rng(0),
                                           tree=tree)
    assert tree.root.n_visits == len(records) == 8
    assert set(tree.root.children) == {"svm", "tree"}
    assert all(c.n_visits == 4 and c.n_playouts == 4 for c in tree.root.children.values())


def test_initial_credit_respects_widening():
    space = SearchSpace("wide", (step(1, *[algo(f"a{i}") for i in range(20)]),))
    tree = MctsTree(space, SearchParams(n_s=5))
    initialize_vanilla(space, FunctionEvaluator(lambda x: 0.5), 0, np.random.default_rng(0), tree=tree)
    assert len(tree.root.children) == math.floor(20 ** 0.6)
    _check_tree(tree)


def test_ucb_bandit():
    space = bandit_space()
    params = SearchParams(selection_rule="ucb", c_ucb=1.3, n_r=10, n_s=5)
    rewards = {"arm0": 0.1, "arm1": 0.9}
    tree = MctsTree(space, params)
    state = SearchState(space)
    rng = np.random.default_rng(0)
    ev = FunctionEvaluator(lambda x: rewards[x.structure[0]])
    for _ in range(200):
        tree_walk(tree, state, ev, params, rng)
    assert tree.root.children["arm1"].n_visits >= 160


def test_toy_space_optimum_within_thirty_walks():
    space = toy_space()
    table = toy_table()
    ev = FunctionEvaluator(lambda x: table[x])
    hits = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        params = SearchParams(n_r=100, n_s=20)
        tree = MctsTree(space, params)
        _, state, _ = initialize_vanilla(space, ev, 3, rng, tree=tree)
        for _ in range(30):
            if state.best_reward == 0.9:
                break
            tree_walk(tree, state, ev, params, rng)
        hits += state.best_reward == 0.9
    assert hits >= 95
