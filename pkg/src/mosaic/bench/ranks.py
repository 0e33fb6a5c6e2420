"""Average-rank tables across problems and the Mann-Whitney U test."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtr
from scipy.stats import rankdata

from .runlog import RunLog

EXACT_LIMIT = 12


class IncompleteGridError(ValueError):
    pass


@dataclass
class RankTable:
    methods: list[str]
    problems: list[str]
    checkpoints: list[int]
    mean_reward: dict   # (problem, method, checkpoint) -> mean best-so-far over seeds
    rank: dict          # (problem, method, checkpoint) -> rank within the problem
    avg_rank: dict      # (method, checkpoint) -> mean rank over problems

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "checkpoint", "avg_rank"])
        for c in self.checkpoints:
            for m in self.methods:
                w.writerow([m, c, repr(self.avg_rank[(m, c)])])
        return buf.getvalue()

    def final(self) -> dict[str, float]:
        c = self.checkpoints[-1]
        return {m: self.avg_rank[(m, c)] for m in self.methods}


def best_at(log: RunLog, checkpoint: int) -> float:
    """Best-so-far after ``checkpoint`` evaluations (the last row when the run is shorter)."""
    if not log.rows:
        return 0.0
    return float(log.rows[min(checkpoint, len(log.rows)) - 1]["best_so_far"])


def aggregate_ranks(logs: Sequence[RunLog], checkpoints: Sequence[int]) -> RankTable:
    """Rank methods per problem by mean best-so-far (rank 1 = best, ties share the mean rank)."""
    if not logs:
        raise ValueError("no run logs given")
    checkpoints = sorted(set(int(c) for c in checkpoints))
    if not checkpoints or checkpoints[0] < 1:
        raise ValueError("checkpoints must be positive evaluation counts")
    cells: dict[tuple, RunLog] = {}
    for log in logs:
        key = (log.problem, log.method, log.seed)
        if key in cells:
            raise ValueError(f"duplicate run log for problem {key[0]}, method {key[1]}, seed {key[2]}")
        cells[key] = log
    methods = sorted({k[1] for k in cells})
    problems = sorted({k[0] for k in cells})
    missing = []
    seeds_of = {}
    for p in problems:
        seeds = sorted({k[2] for k in cells if k[0] == p}, key=str)
        seeds_of[p] = seeds
        missing += [f"{p}/{m}/seed={s}" for m in methods for s in seeds if (p, m, s) not in cells]
    if missing:
        raise IncompleteGridError("incomplete grid, missing cells: " + ", ".join(missing))
    mean_reward, rank, avg = {}, {}, {}
    for c in checkpoints:
        per_problem = []
        for p in problems:
            means = [float(np.mean([best_at(cells[(p, m, s)], c) for s in seeds_of[p]])) for m in methods]
            r = rankdata([-v for v in means], method="average")
            for m, v, rv in zip(methods, means, r):
                mean_reward[(p, m, c)] = v
                rank[(p, m, c)] = float(rv)
            per_problem.append(r)
        arr = np.array(per_problem)
        for j, m in enumerate(methods):
            avg[(m, c)] = float(arr[:, j].mean())
    return RankTable(methods, problems, checkpoints, mean_reward, rank, avg)


def _rank_sum_counts(doubled: Sequence[int], n1: int) -> dict[int, int]:
    """Number of size-``n1`` subsets of the pooled (doubled) ranks per rank sum."""
    table = [dict() for _ in range(n1 + 1)]
    table[0][0] = 1
    for r in doubled:
        for k in range(n1 - 1, -1, -1):
            for total, count in table[k].items():
                nxt = table[k + 1]
                nxt[total + r] = nxt.get(total + r, 0) + count
    return table[n1]


def mann_whitney_u(x: Sequence[float], y: Sequence[float], alternative: str = "two-sided") -> tuple[float, float]:
    """U statistic of ``x`` and its p-value.

    Exact permutation null (ties kept as midranks) when both samples have at
    most 12 observations; otherwise the tie-corrected normal approximation
    with continuity correction.
    """
    if alternative not in ("two-sided", "greater", "less"):
        raise ValueError("alternative must be 'two-sided', 'greater' or 'less'")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n1, n2 = len(x), len(y)
    if n1 == 0 or n2 == 0:
        raise ValueError("both samples must be nonempty")
    ranks = rankdata(np.concatenate([x, y]))
    u1 = float(ranks[:n1].sum() - n1 * (n1 + 1) / 2)
    mu = n1 * n2 / 2.0
    if max(n1, n2) <= EXACT_LIMIT:
        doubled = [int(round(2 * r)) for r in ranks]
        counts = _rank_sum_counts(doubled, n1)
        total = sum(counts.values())
        offset = n1 * (n1 + 1)  # doubled minimum rank sum
        obs = int(round(2 * u1)) + offset
        ge = sum(c for s, c in counts.items() if s >= obs) / total
        le = sum(c for s, c in counts.items() if s <= obs) / total
        if alternative == "greater":
            p = ge
        elif alternative == "less":
            p = le
        else:
            # mass at least as far from the center as the observation
            d = abs(obs - (2 * mu + offset))
            p = sum(c for s, c in counts.items() if abs(s - (2 * mu + offset)) >= d - 1e-9) / total
        return u1, min(1.0, p)
    _, tie_counts = np.unique(ranks, return_counts=True)
    n = n1 + n2
    var = n1 * n2 / 12.0 * ((n + 1) - float((tie_counts ** 3 - tie_counts).sum()) / (n * (n - 1)))
    if var <= 0:
        return u1, 1.0
    sd = math.sqrt(var)
    if alternative == "greater":
        p = float(ndtr(-(u1 - mu - 0.5) / sd))
    elif alternative == "less":
        p = float(ndtr((u1 - mu + 0.5) / sd))
    else:
        z = (abs(u1 - mu) - 0.5) / sd
        p = float(min(1.0, 2.0 * ndtr(-z)))
    return u1, p
