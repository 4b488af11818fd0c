import json

import pytest

from heatflow import cli, runner
from heatflow.semigroup import InstabilityError


def write(tmp_path, name, raw):
    p = tmp_path / name
    p.write_text(json.dumps(raw))
    return str(p)


GAUSS = {"scenario": "gaussian", "id": "g", "pair": {"A": [[1.0, 0.0], [0.0, 2.0]],
                                                     "B": [[3.0, 0.0], [0.0, 1.0]]}}


def test_run_passes_and_writes_report(tmp_path, capsys):
    cfg = write(tmp_path, "g.json", GAUSS)
    assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "out")]) == 0
    rep = json.loads((tmp_path / "out" / "g" / "report.json").read_text())
    assert rep["status"] == "passed" and rep["invariants"]["commuting_recovery"]["passed"]
    assert "g: passed" in capsys.readouterr().out


def test_runs_are_deterministic(tmp_path):
    cfg = write(tmp_path, "g.json", GAUSS)
    for sub in ("a", "b"):
        assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / sub)]) == 0
    a = (tmp_path / "a" / "g" / "trajectory.csv").read_bytes()
    assert a == (tmp_path / "b" / "g" / "trajectory.csv").read_bytes()


def test_failed_invariant_exits_1(tmp_path, capsys):
    cfg = write(tmp_path, "g.json", GAUSS | {"tolerances": {"commuting_recovery": 1e-30}})
    assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "out")]) == 1
    assert "failed: commuting_recovery" in capsys.readouterr().out
    rep = json.loads((tmp_path / "out" / "g" / "report.json").read_text())
    assert rep["status"] == "failed"


@pytest.mark.parametrize("raw", [
    {"scenario": "gaussian", "pair": {"A": [[1.0]]}},
    {"scenario": "bogus"},
    GAUSS | {"tolerances": {"invariant": -1.0}},
    GAUSS | {"tolerances": {"not_a_tolerance": 1.0}},
    {"scenario": "gaussian", "pair": {"A": [[1.0, 0.0], [0.0, 1.0]], "B": [[1.0]]}},
])
def test_bad_configs_exit_2_without_output(tmp_path, raw):
    good = write(tmp_path, "good.json", GAUSS)
    bad = write(tmp_path, "bad.json", raw)
    out = tmp_path / "out"
    assert cli.main(["run", "--config", good, "--config", bad, "--out", str(out)]) == 2
    assert not (out / "g").exists()


def test_usage_errors_exit_2(tmp_path):
    assert cli.main(["run"]) == 2
    assert cli.main(["frobnicate"]) == 2
    assert cli.main(["run", "--config", str(tmp_path / "missing.json")]) == 2
    (tmp_path / "broken.json").write_text("{not json")
    assert cli.main(["validate-config", "--config", str(tmp_path / "broken.json")]) == 2
    cfg = write(tmp_path, "g.json", GAUSS)
    assert cli.main(["run", "--config", cfg, "--tolerance-scale", "0"]) == 2


def test_numerical_abort_exits_3(tmp_path, monkeypatch):
    def boom(cfg, rep, tol):
        raise InstabilityError("growth detected")

    monkeypatch.setitem(runner.RUNNERS, "gaussian", boom)
    cfg = write(tmp_path, "g.json", GAUSS)
    assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "out")]) == 3
    d = tmp_path / "out" / "g"
    assert sorted(p.name for p in d.iterdir()) == ["report.json"]
    assert json.loads((d / "report.json").read_text())["status"] == "aborted"
    assert not [p for p in (tmp_path / "out").iterdir() if p.name.startswith(".")]


def test_env_var_sets_output_root(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "envout"))
    assert cli.main(["run", "--config", write(tmp_path, "g.json", GAUSS)]) == 0
    assert (tmp_path / "envout" / "g" / "report.json").exists()


def test_list_and_validate_shipped(capsys):
    assert cli.main(["list-scenarios"]) == 0
    out = capsys.readouterr().out
    names = cli.shipped_scenarios()
    assert len(names) >= 10 and all(n in out for n in names)
    assert "criterion 11" in out
    assert cli.main(["validate-config", *sum((["--config", n] for n in names), [])]) == 0


def test_seed_override_and_parallel(tmp_path):
    a = write(tmp_path, "a.json", GAUSS | {"id": "a"})
    b = write(tmp_path, "b.json", GAUSS | {"id": "b"})
    assert cli.main(["run", "--config", a, "--config", b, "--parallel", "2", "--seed", "5",
                     "--out", str(tmp_path / "out")]) == 0
    assert json.loads((tmp_path / "out" / "b" / "report.json").read_text())["seed"] == 5
    dup = write(tmp_path, "dup.json", GAUSS | {"id": "a"})
    assert cli.main(["run", "--config", a, "--config", dup]) == 2


def test_acceptance_subset_and_fault_injection(tmp_path, capsys):
    out = tmp_path / "out"
    assert cli.main(["acceptance", "--criteria", "2", "3", "--out", str(out)]) == 0
    assert (out / "acceptance" / "report.json").exists()
    cfg = write(tmp_path, "acc.json", {"scenario": "acceptance-suite", "criteria": [2, 3],
                                       "tolerances": {"c3_commuting": 1e-20}})
    assert cli.main(["acceptance", "--config", cfg, "--out", str(out)]) == 1
    text = capsys.readouterr().out
    assert "FAIL" in text
    bad = write(tmp_path, "acc2.json", {"scenario": "acceptance-suite", "tolerances": {"c99": 1.0}})
    assert cli.main(["acceptance", "--config", bad, "--out", str(out)]) == 2


@pytest.mark.parametrize("name", ["gaussian-commuting", "gaussian-noncommuting", "semigroup-logcosh",
                                  "semigroup-radial3", "flow-identity", "brenier-radial3",
                                  "correlation-disk-slab"])
def test_shipped_scenarios_pass(tmp_path, name):
    assert cli.main(["run", "--config", name, "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / name / "report.json").read_text())
    assert rep["invariants"] and all(v["passed"] for v in rep["invariants"].values())
    if name == "flow-identity":
        assert rep["metrics"]["t_star"] == 0.0
