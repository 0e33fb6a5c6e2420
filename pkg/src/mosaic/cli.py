"""Command-line harness: ``mosaic {run,suite,rank,validate-space,archive}``."""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .bench.external import external_evaluator
from .bench.harness import METHODS, cell_seed, build_archive, run_grid, run_method, run_problem
from .bench.ranks import IncompleteGridError, aggregate_ranks
from .bench.runlog import from_result, read_runlog, write_runlog
from .bench.suite import SUITES, make_suite, problem_by_id
from .space import SpaceError, load_space, validate_space
from .warmstart import ArchiveError, distances, load_archive, nearest_datasets, save_archive

EXIT_OK, EXIT_ERROR, EXIT_INVALID = 0, 1, 2


def _overrides(text):
    if not text:
        return {}
    path = Path(text)
    raw = path.read_text() if not text.lstrip().startswith("{") and path.exists() else text
    doc = json.loads(raw)
    if not isinstance(doc, dict):
        raise ValueError("--params must be a JSON object")
    return doc


def _checkpoints(text, budget=None):
    if text:
        return [int(c) for c in text.split(",")]
    return [budget] if budget else []


def cmd_validate(args) -> int:
    try:
        space = load_space(args.space)
    except (OSError, SpaceError, ValueError) as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_INVALID
    report = validate_space(space)
    for line in report:
        print(f"violation: {line}")
    if report:
        return EXIT_INVALID
    print(f"ok: space '{space.name}' with {space.n_steps} steps, {sum(1 for _ in space.structures())} structures")
    return EXIT_OK


def cmd_run(args) -> int:
    overrides = _overrides(args.params)
    archive = load_archive(args.archive) if args.archive else None
    started = time.time()
    if args.space:
        if not args.command:
            print("--space needs --command to evaluate pipelines", file=sys.stderr)
            return EXIT_ERROR
        space = load_space(args.space)
        report = validate_space(space)
        if report:
            print("invalid space: " + "; ".join(report), file=sys.stderr)
            return EXIT_INVALID
        if archive is not None:
            print("--archive is only supported on suite problems", file=sys.stderr)
            return EXIT_ERROR
        result = run_method(args.method, space, external_evaluator(args.command, args.workdir),
                            args.budget, args.seed, overrides)
        log = from_result(result, space.name, args.method, args.seed, {"budget": args.budget, **overrides},
                          started, time.time())
    else:
        problem = problem_by_id(make_suite(args.suite, args.suite_seed), args.problem)
        log = run_problem(problem, args.method, args.budget, args.seed, overrides, archive)
    if args.out:
        write_runlog(log, args.out)
    best = max(log.rows, key=lambda r: r["reward"]) if log.rows else None
    print(f"{log.problem} {log.method} seed={log.seed}: {len(log.rows)} evaluations, "
          f"best reward {best['reward'] if best else float('nan'):.6f}")
    if best:
        print(json.dumps(best["pipeline"]))
    return EXIT_OK


def cmd_suite(args) -> int:
    problems = make_suite(args.suite, args.suite_seed)
    if args.problem:
        problems = [problem_by_id(problems, p) for p in args.problem]
    methods = args.methods.split(",")
    bad = [m for m in methods if m not in METHODS]
    if bad:
        print(f"unknown method(s): {', '.join(bad)}", file=sys.stderr)
        return EXIT_ERROR
    archive = load_archive(args.archive) if args.archive else None
    out = Path(args.out)
    logs = run_grid(problems, methods, args.budget, args.seeds, args.seed, _overrides(args.params),
                    out / "logs", archive)
    table = aggregate_ranks(logs, _checkpoints(args.checkpoints, args.budget))
    (out / "ranks.csv").write_text(table.to_csv())
    print(table.to_csv(), end="")
    return EXIT_OK


def cmd_rank(args) -> int:
    paths = []
    for p in args.logs:
        p = Path(p)
        paths += sorted(p.glob("*.jsonl")) if p.is_dir() else [p]
    logs = [read_runlog(p) for p in paths]
    budget = min((len(log.rows) for log in logs), default=0)
    try:
        table = aggregate_ranks(logs, _checkpoints(args.checkpoints, budget))
    except IncompleteGridError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_ERROR
    text = table.to_csv()
    if args.out:
        Path(args.out).write_text(text)
    print(text, end="")
    return EXIT_OK


def cmd_archive(args) -> int:
    if args.action == "build":
        problems = make_suite(args.suite, args.suite_seed)
        archive = build_archive(problems, args.budget, args.seed, _overrides(args.params))
        save_archive(archive, args.out)
        print(f"archive with {len(archive)} entries written to {args.out}")
        return EXIT_OK
    archive = load_archive(args.archive)
    print(f"{len(archive)} entries; features: {', '.join(archive.feature_names)}")
    if args.problem:
        problem = problem_by_id(make_suite(args.suite, args.suite_seed), args.problem)
        view = archive.without(problem.id)
        d = distances(view, problem.meta)
        for e in nearest_datasets(view, problem.meta, args.k):
            print(f"{e.id}\tdistance={d[e.id]:.4f}\treward={e.reward:.6f}\t{json.dumps(e.pipeline.to_dict())}")
    else:
        for e in archive.entries:
            print(f"{e.id}\treward={e.reward:.6f}\t{json.dumps(e.pipeline.to_dict())}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mosaic", description="Pipeline search with MCTS and surrogate-based BO.")
    sub = ap.add_subparsers(dest="verb", required=True)

    def suite_opts(p):
        p.add_argument("--suite", default="desk100", choices=SUITES)
        p.add_argument("--suite-seed", type=int, default=0, help="seed the suite problems are generated from")

    p = sub.add_parser("validate-space", help="check a JSON search space (exit 2 when invalid)")
    p.add_argument("space", nargs="?")
    p.add_argument("--space", dest="space_flag")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="one method on one problem")
    suite_opts(p)
    p.add_argument("--problem", help="suite problem id")
    p.add_argument("--space", help="JSON search space evaluated through --command")
    p.add_argument("--command", help="external evaluator command (pipeline JSON on stdin)")
    p.add_argument("--workdir")
    p.add_argument("--method", default="mosaic", choices=METHODS)
    p.add_argument("--budget", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--params", help="JSON object (or file) overriding search/optimizer parameters")
    p.add_argument("--archive", help="warm-start archive (leave-one-out on the problem)")
    p.add_argument("--out", help="run log path (.jsonl)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("suite", help="methods x problems x seeds grid, then ranks")
    suite_opts(p)
    p.add_argument("--problem", action="append", help="restrict to these problem ids")
    p.add_argument("--methods", default="mosaic,bo,random")
    p.add_argument("--method", dest="methods")
    p.add_argument("--budget", type=int, default=300)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--seed", type=int, default=0, help="master seed for per-cell seeds")
    p.add_argument("--params")
    p.add_argument("--archive")
    p.add_argument("--checkpoints", help="comma-separated evaluation counts (default: the budget)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_suite)

    p = sub.add_parser("rank", help="average ranks from run logs")
    p.add_argument("logs", nargs="+", help="run log files or directories")
    p.add_argument("--checkpoints")
    p.add_argument("--out", help="CSV path")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("archive", help="build or inspect a warm-start archive")
    p.add_argument("action", choices=("build", "inspect"))
    p.add_argument("archive", nargs="?", help="archive file (inspect)")
    suite_opts(p)
    p.add_argument("--budget", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--params")
    p.add_argument("--problem", help="show the nearest entries for this problem (leave-one-out)")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--out", help="archive path (build)")
    p.set_defaults(func=cmd_archive)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.verb == "validate-space":
        args.space = args.space or args.space_flag
        if not args.space:
            parser.error("validate-space needs a space file")
    if args.verb == "run" and not (args.problem or args.space):
        parser.error("run needs --problem or --space")
    if args.verb == "archive":
        if args.action == "build" and not args.out:
            parser.error("archive build needs --out")
        if args.action == "inspect" and not args.archive:
            parser.error("archive inspect needs an archive file")
    try:
        return args.func(args)
    except (ArchiveError, SpaceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (KeyError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
