import csv
import json

import pytest

from dualiscope.cli import ConfigError, _jobs, execute, main


def run(tmp_path, config, *extra, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(config))
    out = tmp_path / "out"
    code = main(["run", "--config", str(path), "--out", str(out), *extra])
    return code, out


DUALITY = {
    "experiment": "verify-duality",
    "process": {"variant": "SIP", "m": "1"},
    "graph": {"kind": "path", "size": 3},
    "max_dual": 2,
    "max_occupancy": 2,
}


def test_verify_duality_passes(tmp_path, capsys):
    code, out = run(tmp_path, DUALITY)
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["schema_version"] == 1 and report["verdict"] == "pass"
    with open(out / "cases.csv") as fh:
        header = next(csv.reader(fh))
    assert header == ["check", "case", "field", "value"]
    assert "PASS" in capsys.readouterr().out


def test_non_pd_function_is_a_precondition_error(tmp_path, capsys):
    cfg = {
        "experiment": "comparison",
        "graph": {"kind": "path", "size": 2},
        "n": 2, "a": 1, "b": 1, "times": [1.0],
        "function": {"table": [[-1, 0], [0, -1]]},
    }
    code, out = run(tmp_path, cfg)
    assert code == 2
    assert "precondition" in capsys.readouterr().err
    assert not (out / "report.json").exists()


def test_random_comparison_passes(tmp_path):
    cfg = {
        "experiment": "comparison", "seed": 3,
        "graph": {"kind": "path", "size": 3},
        "n": 2, "a": 2, "b": 4, "times": [0.5],
        "function": {"random": 5},
    }
    assert run(tmp_path, cfg)[0] == 0


def test_config_errors_name_the_path(tmp_path, capsys):
    cfg = {"experiment": "meeting", "graph": {"kind": "path", "size": 3}, "m": 1, "starts": [0, 2], "times": []}
    assert run(tmp_path, cfg)[0] == 2
    assert "$.times" in capsys.readouterr().err
    cfg = {"experiment": "sip-correlations", "graph": {"kind": "path", "size": 2}, "m": "x/2",
           "profile": ["1/3", "1/2"], "points": [0, 1], "times": [1]}
    assert run(tmp_path, cfg)[0] == 2
    assert "$.m" in capsys.readouterr().err


def test_unknown_experiment_and_bad_files(tmp_path, capsys):
    assert run(tmp_path, {"experiment": "nope"})[0] == 2
    assert "unknown experiment" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert main(["run", "--config", str(bad)]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 2


def test_profile_reports_density(tmp_path):
    cfg = {"experiment": "profile",
           "process": {"variant": "BoundaryDrivenSIP", "m": 1, "lam_left": 0, "lam_right": "1/2", "N": 2}}
    code, out = run(tmp_path, cfg)
    assert code == 0
    rows = list(csv.DictReader(open(out / "cases.csv")))
    dens = [r["value"] for r in rows if r["field"] == "density"]
    assert dens == ["2/5", "3/5"]


def test_simulation_is_byte_reproducible(tmp_path):
    cfg = {"experiment": "simulate", "seed": 11, "process": {"variant": "SIP", "m": 1},
           "graph": {"kind": "path", "size": 3}, "T": 1.0, "replicas": 3, "start": [2, 0, 1]}
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    code1, out1 = run(tmp_path / "a", cfg, "--dump")
    code2, out2 = run(tmp_path / "b", cfg, "--dump")
    assert code1 == code2 == 0
    assert (out1 / "cases.csv").read_bytes() == (out2 / "cases.csv").read_bytes()
    assert (out1 / "trajectory.csv").read_bytes() == (out2 / "trajectory.csv").read_bytes()
    header = (out1 / "trajectory.csv").read_text().splitlines()[0]
    assert header == "replica,time,site,value"


def test_simulation_needs_seed():
    cfg = {"experiment": "simulate", "process": {"variant": "SIP", "m": 1},
           "graph": {"kind": "path", "size": 2}, "T": 1.0, "start": [1, 0]}
    with pytest.raises(ConfigError, match="seed"):
        execute(cfg)


def test_bep_simulation_conserves(tmp_path):
    cfg = {"experiment": "simulate", "seed": 2, "process": {"variant": "BEP", "m": 2},
           "graph": {"kind": "path", "size": 3}, "T": 0.5, "dt": 0.01, "replicas": 2, "start": [1.0, 0.5, 2.0]}
    assert run(tmp_path, cfg)[0] == 0


def test_sample_experiment(tmp_path):
    cfg = {"experiment": "sample", "seed": 5, "samples": 20000,
           "measure": {"family": "discrete_gamma", "m": "1/2", "profile": ["1/3", "1/5"]}}
    assert run(tmp_path, cfg)[0] == 0


def test_suite_unknown_preset(tmp_path, capsys):
    assert main(["suite", "bogus", "--out", str(tmp_path)]) == 2
    assert "unknown preset" in capsys.readouterr().err


def test_jobs_from_environment(monkeypatch):
    monkeypatch.setenv("DUALISCOPE_JOBS", "3")
    assert _jobs(None) == 3
    assert _jobs(2) == 2
    monkeypatch.setenv("DUALISCOPE_JOBS", "many")
    assert _jobs(None) == 1


def test_parallel_matches_serial(tmp_path):
    cfg = {"experiment": "sep-correlations", "graph": {"kind": "path", "size": 3}, "n": 1,
           "profile": ["1/5", "1/2", "4/5"], "points": [[0, 2], [0, 1]], "times": [0.1, 1.0]}
    code1, out1 = run(tmp_path, cfg, "--jobs", "1")
    serial = (out1 / "cases.csv").read_bytes()
    code2, out2 = run(tmp_path, cfg, "--jobs", "2")
    assert code1 == code2 == 0
    assert (out2 / "cases.csv").read_bytes() == serial
