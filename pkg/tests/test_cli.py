import json
import sys

import pytest

from mosaic.cli import main
from mosaic.space import save_space, space_to_dict

from .conftest import mixed_space


def test_validate_space_ok(tmp_path, capsys):
    path = tmp_path / "space.json"
    save_space(mixed_space(), path)
    assert main(["validate-space", str(path)]) == 0
    assert "ok" in capsys.readouterr().out


def test_validate_space_violation(tmp_path, capsys):
    doc = space_to_dict(mixed_space())
    doc["steps"][0]["algorithms"][1]["default"] = {"depth": 99}
    path = tmp_path / "space.json"
    path.write_text(json.dumps(doc))
    assert main(["validate-space", "--space", str(path)]) == 2
    assert "depth" in capsys.readouterr().out


def test_validate_space_malformed(tmp_path):
    path = tmp_path / "space.json"
    path.write_text("{")
    assert main(["validate-space", str(path)]) == 2


def test_run_suite_problem(tmp_path, capsys):
    out = tmp_path / "log.jsonl"
    assert main(["run", "--problem", "grid-0", "--budget", "12", "--seed", "1", "--out", str(out),
                 "--params", '{"n_r": 50, "n_s": 10}']) == 0
    lines = out.read_text().splitlines()
    assert json.loads(lines[0])["problem"] == "grid-0" and len(lines) == 13


def test_run_external_command(tmp_path):
    path = tmp_path / "space.json"
    save_space(mixed_space(), path)
    cmd = f'{sys.executable} -c "print(\'{{\\"reward\\": 0.25}}\')"'
    assert main(["run", "--space", str(path), "--command", cmd, "--method", "random", "--budget", "3"]) == 0


def test_run_unknown_problem_and_params(capsys):
    assert main(["run", "--problem", "nope", "--budget", "3"]) == 1
    assert main(["run", "--problem", "grid-0", "--budget", "3", "--params", '{"bogus": 1}']) == 1


def test_suite_and_rank(tmp_path, capsys):
    out = tmp_path / "grid"
    assert main(["suite", "--problem", "grid-0", "--problem", "lattice-0", "--methods", "random,bo",
                 "--budget", "10", "--seeds", "2", "--out", str(out), "--params", '{"n_r": 30, "n_s": 5}']) == 0
    assert (out / "ranks.csv").read_text().startswith("method,checkpoint,avg_rank")
    assert len(list((out / "logs").glob("*.jsonl"))) == 8
    csv = tmp_path / "ranks.csv"
    assert main(["rank", str(out / "logs"), "--checkpoints", "5,10", "--out", str(csv)]) == 0
    assert len(csv.read_text().splitlines()) == 5
    next((out / "logs").glob("grid-0__bo__*.jsonl")).unlink()
    assert main(["rank", str(out / "logs")]) == 1
    assert "missing" in capsys.readouterr().err


def test_archive_build_and_inspect(tmp_path, capsys):
    path = tmp_path / "archive.json"
    assert main(["archive", "build", "--budget", "10", "--out", str(path), "--params", '{"n_r": 30, "n_s": 5}']) == 0
    assert main(["archive", "inspect", str(path), "--problem", "grid-0", "--k", "3"]) == 0
    out = capsys.readouterr().out
    assert "distance=" in out and "grid-0\t" not in out


def test_archive_inspect_malformed(tmp_path):
    path = tmp_path / "archive.json"
    path.write_text('{"feature_names": ["a"], "entries": [{"id": "x"}]}')
    assert main(["archive", "inspect", str(path)]) == 2


def test_usage_errors():
    with pytest.raises(SystemExit) as exc:
        main(["run"])
    assert exc.value.code == 2
