"""Evaluation records and the evaluator interface."""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor, TimeoutError as FutureTimeout
from dataclasses import dataclass, field
from typing import Any, NamedTuple

import numpy as np

from .space import Pipeline

log = logging.getLogger(__name__)

OK = "ok"
FAILED = "failed"
TIMEOUT = "timeout"


class Outcome(NamedTuple):
    reward: float
    status: str = OK
    duration: float = 0.0
    info: dict | None = None


@dataclass(frozen=True)
class EvaluationRecord:
    pipeline: Pipeline
    reward: float
    status: str
    duration: float
    walk_index: int
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.status != OK and self.reward != 0.0:
            raise ValueError("non-ok evaluations carry reward 0")


class Evaluator:
    """Maps a pipeline to a reward in [0, 1].

    Subclasses implement :meth:`evaluate`. Evaluators able to expose held-out
    class probabilities (for ensembling) also implement
    :meth:`validation_predictions` and :meth:`validation_targets`.
    """

    #: set when ``evaluate`` itself abandons work past the cutoff
    enforces_cutoff = False

    def evaluate(self, pipeline: Pipeline, cutoff: float) -> Outcome | float:
        raise NotImplementedError

    def validation_predictions(self, pipeline: Pipeline) -> np.ndarray | None:
        return None

    def validation_targets(self) -> np.ndarray | None:
        return None


class FunctionEvaluator(Evaluator):
    """Wraps a plain ``pipeline -> reward`` callable."""

    def __init__(self, fn):
        self.fn = fn

    def evaluate(self, pipeline, cutoff):
        return self.fn(pipeline)


_executor: ThreadPoolExecutor | None = None


def _worker() -> ThreadPoolExecutor:
    global _executor
    if _executor is None:
        _executor = ThreadPoolExecutor(max_workers=1, thread_name_prefix="mosaic-eval")
    return _executor


def _abandon_worker():
    # the stuck thread keeps running; later evaluations get a fresh worker
    global _executor
    if _executor is not None:
        _executor.shutdown(wait=False)
    _executor = None


def _coerce(result) -> Outcome:
    if isinstance(result, Outcome):
        return result
    if isinstance(result, tuple):
        return Outcome(*result)
    return Outcome(float(result))


def evaluate_with_cutoff(evaluator: Evaluator, pipeline: Pipeline, cutoff: float,
                         walk_index: int = 0) -> EvaluationRecord:
    """Evaluate ``pipeline``, abandoning the evaluation once ``cutoff`` seconds elapse.

    Never raises for evaluator problems: exceptions and out-of-range rewards
    become ``failed`` records, overruns become ``timeout`` records, both with
    reward 0.
    """
    if not cutoff > 0:
        raise ValueError("cutoff must be positive")
    start = time.perf_counter()
    try:
        if evaluator.enforces_cutoff:
            outcome = _coerce(evaluator.evaluate(pipeline, cutoff))
        else:
            future = _worker().submit(evaluator.evaluate, pipeline, cutoff)
            try:
                outcome = _coerce(future.result(timeout=cutoff))
            except FutureTimeout:
                _abandon_worker()
                outcome = Outcome(0.0, TIMEOUT)
    except Exception as exc:  # evaluator bugs are data, not control flow
        log.debug("evaluation of %r raised %r", pipeline, exc)
        outcome = Outcome(0.0, FAILED, info={"error": repr(exc)})
    duration = time.perf_counter() - start
    info = dict(outcome.info or {})
    status = outcome.status if outcome.status in (OK, FAILED, TIMEOUT) else FAILED
    reward = outcome.reward
    if status == OK:
        try:
            reward = float(reward)
        except (TypeError, ValueError):
            reward = math.nan
        if not (math.isfinite(reward) and 0.0 <= reward <= 1.0):
            info.setdefault("error", f"reward {outcome.reward!r} outside [0, 1]")
            status = FAILED
    if status != OK:
        reward = 0.0
    return EvaluationRecord(pipeline, float(reward), status, duration, walk_index, info)
