"""Line-delimited JSON run logs: a header line, then one row per evaluation."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from ..optimizer import OptimizationResult
from ..warmstart import write_atomic

# wall-clock fields; everything else must match across reruns with the same seed
VOLATILE_HEADER = ("started", "finished")
VOLATILE_ROW = ("duration",)


class RunLogError(ValueError):
    pass


@dataclass
class RunLog:
    header: dict
    rows: list[dict] = field(default_factory=list)

    @property
    def problem(self) -> str:
        return self.header["problem"]

    @property
    def method(self) -> str:
        return self.header["method"]

    @property
    def seed(self):
        return self.header["seed"]

    def rewards(self) -> list[float]:
        return [r["reward"] for r in self.rows]

    def comparable(self) -> "RunLog":
        """Copy without the wall-clock fields."""
        header = {k: v for k, v in self.header.items() if k not in VOLATILE_HEADER}
        rows = [{k: v for k, v in r.items() if k not in VOLATILE_ROW} for r in self.rows]
        return RunLog(header, rows)

    def to_text(self) -> str:
        lines = [json.dumps(self.header, sort_keys=True, allow_nan=False)]
        lines += [json.dumps(r, sort_keys=True, allow_nan=False) for r in self.rows]
        return "\n".join(lines) + "\n"


def from_result(result: OptimizationResult, problem: str, method: str, seed, params: dict | None = None,
                started: float | None = None, finished: float | None = None) -> RunLog:
    header = {"problem": problem, "method": method, "seed": seed, "params": params or {},
              "started": started, "finished": finished, "n_init": result.n_init,
              "truncated": result.truncated, "warnings": list(result.warnings)}
    if result.ensemble_weights is not None:
        w = result.ensemble_weights
        header["ensemble"] = {"weights": {str(k): v for k, v in sorted(w.weights.items())},
                              "size": w.size, "score": w.score}
    rows = []
    best = None
    for rec in result.history:
        best = rec.reward if best is None else max(best, rec.reward)
        rows.append({"walk_index": rec.walk_index, "pipeline": rec.pipeline.to_dict(), "reward": rec.reward,
                     "status": rec.status, "duration": rec.duration, "best_so_far": best,
                     "info": dict(rec.info)})
    return RunLog(header, rows)


def write_runlog(log: RunLog, path) -> None:
    write_atomic(path, log.to_text())


def read_runlog(path) -> RunLog:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise RunLogError(f"{path}: empty run log")
    parsed = []
    for no, line in enumerate(lines, start=1):
        try:
            parsed.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise RunLogError(f"{path}: line {no}: {exc.msg}") from None
    header, rows = parsed[0], parsed[1:]
    for key in ("problem", "method", "seed"):
        if key not in header:
            raise RunLogError(f"{path}: header lacks '{key}'")
    check_rows(rows, str(path))
    return RunLog(header, rows)


def check_rows(rows, where: str = "run log") -> None:
    best = None
    for i, row in enumerate(rows):
        if i and row["walk_index"] <= rows[i - 1]["walk_index"]:
            raise RunLogError(f"{where}: rows not ordered by walk_index at row {i + 1}")
        best = row["reward"] if best is None else max(best, row["reward"])
        if row["best_so_far"] != best:
            raise RunLogError(f"{where}: best_so_far at row {i + 1} is not the running max")
