import time

import numpy as np
import pytest

from mosaic.evaluation import FAILED, OK, TIMEOUT, Evaluator, FunctionEvaluator, Outcome, evaluate_with_cutoff
from mosaic.mcts import MctsTree, SearchParams
from mosaic.optimizer import (InitializationError, OptimizerParams, initialize_metalearning,
                              initialize_vanilla, run)
from mosaic.space import HyperparameterSpec as H, Pipeline, SearchSpace
from mosaic.warmstart import Archive, ArchiveEntry

from .conftest import algo, mixed_space, single_space, step, toy_space, toy_table


def four_space():
    return SearchSpace("four", (step(1, *[algo(n, H.continuous("x", 0.0, 1.0), x=0.5) for n in "abcd"]),))


def smooth(x):
    return 1.0 - abs(x.theta[0].get("x", 0.5) - 0.3)


# initialization

def test_vanilla_count():
    records, state, root_q = initialize_vanilla(four_space(), FunctionEvaluator(smooth), 3, np.random.default_rng(0))
    assert len(records) == len(state) == 16
    assert set(root_q) == set("abcd")
    assert [r.pipeline.structure[0] for r in records] == [a for a in "abcd" for _ in range(4)]
    assert records[0].pipeline.theta[0] == {"x": 0.5}


def test_vanilla_kappa_zero():
    records, _, _ = initialize_vanilla(four_space(), FunctionEvaluator(smooth), 0, np.random.default_rng(0))
    assert len(records) == 4
    assert all(r.pipeline.theta[0] == {"x": 0.5} for r in records)


def test_crashing_algorithm_marked_failed():
    def fn(x):
        if x.structure[0] == "b":
            raise RuntimeError("boom")
        return 0.5

    records, state, _ = initialize_vanilla(four_space(), FunctionEvaluator(fn), 3, np.random.default_rng(0))
    failed = [r for r in records if r.status == FAILED]
    assert len(failed) == 4 and all(r.reward == 0.0 for r in failed)
    assert state.best_reward == 0.5


def test_every_initial_evaluation_failing():
    def fn(x):
        raise RuntimeError("boom")

    with pytest.raises(InitializationError, match="initialization failed"):
        initialize_vanilla(four_space(), FunctionEvaluator(fn), 1, np.random.default_rng(0))


def _archive(entries):
    return Archive(("f",), tuple(ArchiveEntry(i, (m,), p, r) for i, m, p, r in entries))


def test_metalearning_deduplicates_and_tops_up():
    x = Pipeline(("a",), ({"x": 0.3},))
    archive = _archive([("d1", 0.0, x, 0.9), ("d2", 0.1, x, 0.8), ("d3", 5.0, Pipeline(("b",), ({"x": 0.1},)), 0.7)])
    warnings = []
    records, _, _ = initialize_metalearning(archive, (0.0,), 2, four_space(), FunctionEvaluator(smooth),
                                            np.random.default_rng(0), kappa=1, warnings=warnings)
    assert records[0].pipeline == x
    assert sum(r.pipeline == x for r in records) == 1
    # a is covered by the archive; b, c, d get default + 1 sample each
    assert len(records) == 1 + 3 * 2
    assert warnings == []


def test_metalearning_skips_unknown_algorithm():
    bad = Pipeline(("zzz",), ({},))
    archive = _archive([("d1", 0.0, bad, 0.9)])
    warnings = []
    records, _, _ = initialize_metalearning(archive, (0.0,), 5, four_space(), FunctionEvaluator(smooth),
                                            np.random.default_rng(0), kappa=0, warnings=warnings)
    assert len(records) == 4
    assert any("d1" in w for w in warnings)


def test_metalearning_empty_archive_falls_back():
    warnings = []
    records, _, _ = initialize_metalearning(Archive(("f",)), (0.0,), 25, four_space(), FunctionEvaluator(smooth),
                                            np.random.default_rng(0), kappa=3, warnings=warnings)
    assert len(records) == 16
    assert any("empty archive" in w for w in warnings)


def test_metalearning_through_run_uses_archive_first():
    x = Pipeline(("c",), ({"x": 0.3},))
    archive = _archive([("d1", 0.0, x, 1.0)])
    params = OptimizerParams(max_evaluations=20, init_mode="metalearning", archive=archive,
                             meta_features=(0.0,), kappa=1, search=SearchParams(n_r=50, n_s=10))
    result = run(four_space(), FunctionEvaluator(smooth), params)
    assert result.history[0].pipeline == x
    assert result.best.reward == 1.0


# budgets and results

def test_budget_smaller_than_initialization():
    params = OptimizerParams(max_evaluations=10, search=SearchParams(n_r=20, n_s=5))
    result = run(four_space(), FunctionEvaluator(smooth), params)
    assert len(result.history) == 10
    assert result.truncated
    assert result.n_init == 10


def test_budget_equal_to_initialization_is_not_truncated():
    params = OptimizerParams(max_evaluations=16, search=SearchParams(n_r=20, n_s=5))
    result = run(four_space(), FunctionEvaluator(smooth), params)
    assert len(result.history) == 16 and not result.truncated


def test_zero_budget():
    result = run(four_space(), FunctionEvaluator(smooth), OptimizerParams(max_evaluations=0))
    assert result.history == [] and result.best is None


def test_exact_evaluation_count_and_curve():
    params = OptimizerParams(max_evaluations=30, search=SearchParams(n_r=50, n_s=10), seed=3)
    result = run(mixed_space(), FunctionEvaluator(lambda x: 0.5 + 0.4 * (x.structure[0] == "tree")), params)
    assert len(result.history) == 30
    assert [i for i, _ in result.incumbent_curve] == list(range(30))
    vals = [v for _, v in result.incumbent_curve]
    assert all(a <= b for a, b in zip(vals, vals[1:]))
    assert vals[-1] == result.best.reward


def test_run_is_deterministic():
    params = OptimizerParams(max_evaluations=35, search=SearchParams(n_r=100, n_s=20), seed=11)
    ev = FunctionEvaluator(lambda x: 0.3 + 0.1 * len(x.structure[1]) + 0.05 * (x.structure[2] == "median"))
    a = run(mixed_space(), ev, params)
    b = run(mixed_space(), ev, params)
    assert [(r.pipeline, r.reward, r.status) for r in a.history] == [(r.pipeline, r.reward, r.status)
                                                                     for r in b.history]


def test_wall_clock_budget_stops():
    params = OptimizerParams(wall_clock=0.5, search=SearchParams(n_r=20, n_s=5))
    start = time.monotonic()
    result = run(single_space(), FunctionEvaluator(smooth), params)
    assert time.monotonic() - start < 5.0
    assert len(result.history) >= 1


def test_invalid_params():
    with pytest.raises(ValueError):
        OptimizerParams()
    with pytest.raises(ValueError):
        OptimizerParams(max_evaluations=5, kappa=-1)
    with pytest.raises(ValueError):
        OptimizerParams(max_evaluations=5, init_mode="metalearning")


# evaluation cut-off

class Sleeper(Evaluator):
    def evaluate(self, pipeline, cutoff):
        time.sleep(0.5)
        return 0.8


def test_cutoff_produces_timeout():
    rec = evaluate_with_cutoff(Sleeper(), Pipeline(("f",), ({"x": 0.5},)), 0.05)
    assert rec.status == TIMEOUT and rec.reward == 0.0


def test_out_of_range_reward_is_failure():
    rec = evaluate_with_cutoff(FunctionEvaluator(lambda x: 1.2), Pipeline(("f",), ({"x": 0.5},)), 5.0)
    assert rec.status == FAILED and rec.reward == 0.0
    rec = evaluate_with_cutoff(FunctionEvaluator(lambda x: float("nan")), Pipeline(("f",), ({"x": 0.5},)), 5.0)
    assert rec.status == FAILED


def test_outcome_passthrough():
    rec = evaluate_with_cutoff(FunctionEvaluator(lambda x: Outcome(0.4, OK, info={"k": 1})),
                               Pipeline(("f",), ({"x": 0.5},)), 5.0)
    assert rec.reward == 0.4 and rec.info == {"k": 1}


def test_timeouts_counted_in_budget():
    calls = []

    class Slow(Evaluator):
        def evaluate(self, pipeline, cutoff):
            calls.append(1)
            if len(calls) % 4 == 0:
                time.sleep(0.3)
            return 0.5

    params = OptimizerParams(max_evaluations=12, eval_cutoff=0.05, search=SearchParams(n_r=20, n_s=5))
    result = run(four_space(), Slow(), params)
    assert len(result.history) == 12
    assert any(r.status == TIMEOUT for r in result.history)


# end to end

def test_toy_space_budget_forty():
    space, table = toy_space(), toy_table()
    ev = FunctionEvaluator(lambda x: table[x])
    hits = 0
    for seed in range(100):
        result = run(space, ev, OptimizerParams(max_evaluations=40, seed=seed, search=SearchParams(n_r=100, n_s=20)))
        hits += result.best.reward == 0.9
    assert hits >= 95


def test_tree_counts_every_evaluation():
    params = OptimizerParams(max_evaluations=25, search=SearchParams(n_r=30, n_s=5))
    result = run(mixed_space(), FunctionEvaluator(lambda x: 0.5), params)
    assert result.tree.root.n_visits == 25
    assert isinstance(result.tree, MctsTree)
