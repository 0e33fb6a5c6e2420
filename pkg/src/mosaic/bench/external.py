"""Evaluator bridge to an external command.

Protocol: the pipeline JSON is written to the command's stdin; the command
prints one JSON object with a ``reward`` field on stdout and exits 0.
"""
from __future__ import annotations

import json
import shlex
import subprocess

from ..evaluation import FAILED, OK, TIMEOUT, Evaluator, Outcome


class ExternalCommandEvaluator(Evaluator):
    enforces_cutoff = True

    def __init__(self, command, workdir=None):
        self.argv = shlex.split(command) if isinstance(command, str) else list(command)
        if not self.argv:
            raise ValueError("empty command")
        self.workdir = workdir

    def evaluate(self, pipeline, cutoff):
        payload = json.dumps(pipeline.to_dict())
        try:
            proc = subprocess.Popen(self.argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                    stderr=subprocess.PIPE, cwd=self.workdir, text=True)
        except OSError as exc:
            return Outcome(0.0, FAILED, info={"error": f"cannot start {self.argv[0]!r}: {exc}"})
        try:
            out, err = proc.communicate(payload, timeout=cutoff)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.communicate()
            return Outcome(0.0, TIMEOUT)
        if proc.returncode != 0:
            return Outcome(0.0, FAILED, info={"error": f"exit status {proc.returncode}",
                                              "stderr": err[-2000:]})
        line = next((ln for ln in out.splitlines() if ln.strip()), "")
        try:
            doc = json.loads(line)
            reward = doc["reward"]
        except (json.JSONDecodeError, TypeError, KeyError):
            return Outcome(0.0, FAILED, info={"error": f"malformed output: {line[:200]!r}"})
        info = {k: v for k, v in doc.items() if k != "reward"}
        return Outcome(reward, OK, info=info)


def external_evaluator(command, workdir=None) -> ExternalCommandEvaluator:
    return ExternalCommandEvaluator(command, workdir)
