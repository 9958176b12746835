import csv
import json

import pytest

from covdetect import cli, instance_io


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_simulate_then_solve(tmp_path, capsys):
    inst = tmp_path / "i.bin"
    code, out, _ = run(capsys, "simulate", "--N", "60", "--out", str(inst), "--csv", str(tmp_path / "g.csv"))
    assert code == 0 and inst.exists()
    assert instance_io.read_instance(inst).N == 60
    code, out, err = run(capsys, "solve", "--instance", str(inst), "--trace")
    assert code == 0
    res = json.loads(out)
    assert res["converged"] and len(res["gamma"]) == 120
    assert err.startswith("k,active_size,objective,kkt,elapsed_s")


@pytest.mark.parametrize("solver", ["cd", "pg", "ideal_cd", "ideal_pg"])
def test_solve_each_solver(capsys, solver):
    code, out, _ = run(capsys, "solve", "--N", "40", "--solver", solver, "--no-gamma", "--seed", "3")
    assert code == 0 and json.loads(out)["method"] == solver


def test_solve_nonconvergence_exit_code(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"N": [200], "max_outer": 1}))
    code, out, _ = run(capsys, "solve", "--config", str(cfg), "--no-gamma")
    assert code == 2 and not json.loads(out)["converged"]


def test_usage_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as e:
        cli.main(["bogus"])
    assert e.value.code == 1
    with pytest.raises(SystemExit) as e:
        cli.main(["solve", "--solver", "em"])
    assert e.value.code == 1
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"trials": 0}))
    code, _, err = run(capsys, "bench", "--config", str(bad))
    assert code == 1 and "error" in err


def test_bench_and_unwritable_path(tmp_path, capsys):
    out = tmp_path / "res"
    code, _, _ = run(capsys, "bench", "--N", "40", "--trials", "2", "--out", str(out),
                     "--sequential", "--format", "csv", "json")
    assert code == 0
    rows = list(csv.DictReader(open(out / "trials.csv")))
    assert len(rows) == 4
    (tmp_path / "f").write_text("")
    code, _, err = run(capsys, "bench", "--N", "40", "--trials", "1", "--out", str(tmp_path / "f" / "x"))
    assert code == 1 and "error" in err


def test_validate_small(capsys):
    code, out, _ = run(capsys, "validate", "--instances", "3", "--coords", "4")
    assert code == 0 and out.count("PASS") == 2
