import csv
import json

import jsonschema
import numpy as np
import pytest

from covdetect import harness, model


def tiny(**kw):
    base = dict(N=[40], L=12, M=64, trials=2, solvers=["active_set_pg", "cd"])
    base.update(kw)
    return harness.ExperimentConfig(**base)


def test_config_validation():
    with pytest.raises(jsonschema.ValidationError):
        tiny(trials=0)
    with pytest.raises(jsonschema.ValidationError):
        tiny(N=[])
    with pytest.raises(jsonschema.ValidationError):
        tiny(K_ratio=1.5)
    with pytest.raises(jsonschema.ValidationError):
        tiny(solvers=["em"])
    with pytest.raises(ValueError):
        tiny(g=1.0)
    with pytest.raises(jsonschema.ValidationError):
        harness.ExperimentConfig.from_dict({"unknown": 1})


def test_config_json_round_trip(tmp_path):
    exp = tiny(pg={"window": 5})
    p = tmp_path / "c.json"
    p.write_text(json.dumps(exp.to_dict()))
    again = harness.ExperimentConfig.from_json(p)
    assert again == exp and again.pg_config().window == 5


def test_presets():
    desk = harness.preset("desk")
    assert desk.system(200).K == 20 and desk.L == 50
    full = harness.preset("full")
    assert full.N == [500, 1000, 2000, 4000] and full.trials == 500 and full.L == 150
    g, s2 = full.link()
    assert s2 == 1.0 and g == pytest.approx(model.cell_edge_link_budget()[0])


def test_single_report():
    reps = harness.run_experiment(tiny(trials=1, solvers=["active_set_pg"]))
    assert len(reps) == 1
    r = reps[0]
    assert r.solver == "active_set_pg" and r.cardinality_ratio >= 0 and r.K == 4


def test_same_instance_for_all_solvers():
    exp = tiny(trials=1, solvers=["active_set_pg", "cd", "pg", "ideal_cd", "ideal_pg"])
    reps = harness.run_experiment(exp)
    objs = {r.solver: r.objective for r in reps}
    # identical instance: unrestricted solvers reach the same optimum
    assert objs["cd"] == pytest.approx(objs["active_set_pg"], rel=1e-6)
    assert objs["pg"] == pytest.approx(objs["active_set_pg"], rel=1e-6)
    assert np.isnan(next(r for r in reps if r.solver == "cd").cardinality_ratio)


def test_deterministic_except_time():
    a = harness.run_experiment(tiny())
    b = harness.run_experiment(tiny())
    strip = lambda r: {k: v for k, v in vars(r).items() if k not in harness.TIME_COLUMNS}  # noqa: E731
    assert [strip(r) for r in a] == [strip(r) for r in b]


def test_parallel_matches_sequential():
    a = harness.run_experiment(tiny(workers=2))
    b = harness.run_experiment(tiny(), sequential=True)
    assert [r.objective for r in a] == [r.objective for r in b]


def test_nonconvergence_recorded():
    reps = harness.run_experiment(tiny(trials=1, max_outer=1, max_sweeps=1))
    assert not all(r.converged for r in reps)


def test_emit_csv_and_json(tmp_path):
    reps = harness.run_experiment(tiny(trials=3))
    paths = harness.emit_results(reps, tmp_path, ["csv", "json"])
    assert {p.name for p in paths} == {"trials.csv", "aggregate.csv", "trials.json", "aggregate.json"}
    rows = list(csv.DictReader(open(tmp_path / "trials.csv")))
    assert list(rows[0].keys()) == harness.COLUMNS and len(rows) == 6
    assert {r["solver"] for r in rows} == {"active_set_pg", "cd"}
    agg = json.loads((tmp_path / "aggregate.json").read_text())
    for row in agg:
        vals = [r.objective for r in reps if r.solver == row["solver"]]
        assert row["trials"] == 3
        assert abs(row["objective_mean"] - np.mean(vals)) <= 1e-12 * abs(np.mean(vals))
        assert row["objective_se"] == pytest.approx(np.std(vals, ddof=1) / np.sqrt(3))


def test_emit_one_report(tmp_path):
    reps = harness.run_experiment(tiny(trials=1, solvers=["cd"]))
    harness.emit_results(reps, tmp_path)
    assert len((tmp_path / "trials.csv").read_text().splitlines()) == 2


def test_aggregate_over_many():
    r = harness.run_experiment(tiny(trials=1, solvers=["cd"]))[0]
    many = [harness.TrialReport(**{**vars(r), "trial": t, "wall_time": float(t)}) for t in range(500)]
    (row,) = harness.aggregate(many)
    assert row["trials"] == 500 and row["wall_time_mean"] == pytest.approx(249.5, abs=1e-12)


def test_emit_errors(tmp_path):
    with pytest.raises(ValueError):
        harness.emit_results([], tmp_path)
    (tmp_path / "file").write_text("x")
    reps = harness.run_experiment(tiny(trials=1, solvers=["cd"]))
    with pytest.raises(OSError):
        harness.emit_results(reps, tmp_path / "file" / "sub")
