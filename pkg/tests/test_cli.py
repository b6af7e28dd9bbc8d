import json
import re
from pathlib import Path

import pytest
from conftest import SAMPLES, needs_solver

from dafsm import bench, cli, dsl

MALFORMED = Path(__file__).parent / "data" / "malformed"


@needs_solver
def test_check_smp(capsys):
    assert cli.main(["check", str(SAMPLES / "smp.daf")]) == 0
    assert capsys.readouterr().out.startswith("WellFormed")


@needs_solver
def test_check_d3_json(capsys):
    assert cli.main(["check", str(SAMPLES / "d3.daf"), "--json"]) == 1
    data = json.loads(capsys.readouterr().out)
    fails = [c for c in data["checks"] if c["outcome"] == "Fail"]
    assert [(c["kind"], c["site"]) for c in fails] == [("Consistent", "ctor")]


@needs_solver
@pytest.mark.parametrize("name", ["smp", "d1", "d2", "d3", "det_overlap"])
def test_stop_and_non_stop_exit_codes_agree(name, capsys):
    path = str(SAMPLES / f"{name}.daf")
    assert cli.main(["check", path, "--stop"]) == cli.main(["check", path, "--non-stop"])


def test_missing_file(capsys):
    assert cli.main(["check", "missing.daf"]) == 3
    assert "missing.daf" in capsys.readouterr().err


def test_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code == 3


def test_bad_solver(capsys):
    assert cli.main(["check", str(SAMPLES / "smp.daf"), "--solver", "/nonexistent/solver"]) == 3
    assert "solver" in capsys.readouterr().err


def test_parse_errors_carry_spans(capsys):
    path = MALFORMED / "malformed_guard.daf"
    assert cli.main(["check", str(path)]) == 3
    err = capsys.readouterr().err
    assert re.search(rf"{re.escape(str(path))}:3:14: grammar error", err)


def test_viz(tmp_path):
    out = tmp_path / "smp.dot"
    assert cli.main(["viz", str(SAMPLES / "smp.daf"), "-o", str(out)]) == 0
    assert out.read_text().startswith("digraph dafsm")


def test_generate_round_trips(tmp_path):
    out = tmp_path / "g.daf"
    assert cli.main(["generate", "--seed", "3", "-s", "10", "-t", "20", "-o", str(out)]) == 0
    m = dsl.load(out)
    assert len(m.states) == 10 and len(m.transitions) == 20
    again = tmp_path / "h.daf"
    cli.main(["generate", "--seed", "3", "-s", "10", "-t", "20", "-o", str(again)])
    assert out.read_bytes() == again.read_bytes()


def test_generate_infeasible(capsys):
    assert cli.main(["generate", "-s", "10", "-t", "8"]) == 3


def test_bench_small(tmp_path, monkeypatch, capsys):
    monkeypatch.setattr(bench, "GRID_STATES", (10,))
    monkeypatch.setenv("DAFSM_BENCH_SEED", "5")
    out = tmp_path / "b.csv"
    assert cli.main(["bench", "-o", str(out), "--runs", "1", "--no-verdict"]) == 0
    assert out.read_text().splitlines()[0] == ",".join(bench.CSV_COLUMNS)
    assert '"seed": 5' in out.with_suffix(".manifest.json").read_text()
