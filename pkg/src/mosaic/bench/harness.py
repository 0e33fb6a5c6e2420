"""Running methods on suite problems, suite grids and archive construction."""
from __future__ import annotations

import dataclasses
import hashlib
import time
from pathlib import Path

from ..mcts import SearchParams
from ..optimizer import OptimizationResult, OptimizerParams, run
from ..surrogate import ForestParams
from ..warmstart import Archive, ArchiveEntry
from .baselines import run_baseline_bo, run_baseline_random
from .runlog import RunLog, from_result, write_runlog
from .suite import META_FEATURES, SyntheticProblem

METHODS = ("mosaic", "mosaic-ucb", "random", "bo")
SEARCH_KEYS = {f.name for f in dataclasses.fields(SearchParams)} - {"forest"}
FOREST_KEYS = {f.name for f in dataclasses.fields(ForestParams)}
OPTIMIZER_KEYS = {f.name for f in dataclasses.fields(OptimizerParams)} - {
    "search", "archive", "meta_features", "max_evaluations", "seed"}


def cell_seed(master: int, problem_id: str, replicate: int) -> int:
    """Seed of one (problem, replicate) cell, shared by every method for paired comparisons."""
    h = hashlib.blake2b(f"{master}|{problem_id}|{replicate}".encode(), digest_size=4)
    return int.from_bytes(h.digest(), "little")


def make_params(budget: int, seed: int, overrides: dict | None = None, method: str = "mosaic",
                archive: Archive | None = None, meta=None) -> OptimizerParams:
    """OptimizerParams from flat JSON-style overrides (search, forest and optimizer keys)."""
    overrides = dict(overrides or {})
    unknown = set(overrides) - SEARCH_KEYS - FOREST_KEYS - OPTIMIZER_KEYS
    if unknown:
        raise ValueError(f"unknown parameter(s): {', '.join(sorted(unknown))}")
    forest = ForestParams(**{k: overrides.pop(k) for k in list(overrides) if k in FOREST_KEYS})
    search = {k: overrides.pop(k) for k in list(overrides) if k in SEARCH_KEYS}
    if method == "mosaic-ucb":
        search.setdefault("selection_rule", "ucb")
    opt = dict(overrides)
    if archive is not None:
        opt.update(init_mode="metalearning", archive=archive, meta_features=meta)
    return OptimizerParams(search=SearchParams(forest=forest, **search), max_evaluations=budget, seed=seed, **opt)


def run_method(method: str, space, evaluator, budget: int, seed: int, overrides: dict | None = None,
               archive: Archive | None = None, meta=None) -> OptimizationResult:
    if method not in METHODS:
        raise ValueError(f"unknown method '{method}'; choose from {', '.join(METHODS)}")
    if method == "random":
        return run_baseline_random(space, evaluator, budget, seed)
    params = make_params(budget, seed, overrides, method, archive, meta)
    if method == "bo":
        return run_baseline_bo(space, evaluator, budget, params, seed)
    return run(space, evaluator, params)


def run_problem(problem: SyntheticProblem, method: str, budget: int, seed: int, overrides: dict | None = None,
                archive: Archive | None = None) -> RunLog:
    """One cell on a suite problem; a given archive is used leave-one-out."""
    started = time.time()
    if archive is not None:
        archive = archive.without(problem.id)
    result = run_method(method, problem.space, problem.evaluator(seed), budget, seed, overrides,
                        archive, problem.meta if archive is not None else None)
    params = {"budget": budget, **(overrides or {})}
    if archive is not None:
        params["init_mode"] = "metalearning"
    return from_result(result, problem.id, method, seed, params, started, time.time())


def run_grid(problems, methods, budget: int, n_seeds: int, master_seed: int = 0, overrides: dict | None = None,
             out_dir=None, archive: Archive | None = None) -> list[RunLog]:
    logs = []
    for problem in problems:
        for rep in range(n_seeds):
            seed = cell_seed(master_seed, problem.id, rep)
            for method in methods:
                log = run_problem(problem, method, budget, seed, overrides, archive)
                if out_dir is not None:
                    write_runlog(log, Path(out_dir) / f"{problem.id}__{method}__{rep}.jsonl")
                logs.append(log)
    return logs


def build_archive(problems, budget: int = 100, seed: int = 0, overrides: dict | None = None) -> Archive:
    """Best pipeline found by a MOSAIC run on each problem, with the problem's meta-features."""
    entries = []
    for problem in problems:
        result = run_method("mosaic", problem.space, problem.evaluator(seed), budget,
                            cell_seed(seed, problem.id, 0), overrides)
        entries.append(ArchiveEntry(problem.id, tuple(problem.meta), result.best.pipeline, result.best.reward))
    return Archive(META_FEATURES, tuple(entries))
