import csv
import io
import json
import os
import subprocess
import sys

import pytest

import oracles
from conftest import A, B, C
from reidrisk.cli import main

TWO_USER_CDR = """caller_id,receiver_id,tower_id,time
u1,u2,tA,2013-03-01 10:05
u1,u2,tB,2013-03-01 10:40
u2,u1,tA,2013-03-01 10:10
u2,u1,tC,2013-03-01 10:59
"""
TWO_USER_MAP = """tower_id,zip,district
tA,A,d1
tB,B,d1
tC,C,d2
"""


@pytest.fixture
def fixture_files(tmp_path):
    (tmp_path / "cdr.csv").write_text(TWO_USER_CDR)
    (tmp_path / "map.csv").write_text(TWO_USER_MAP)
    return tmp_path


@pytest.fixture(scope="module")
def synth(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["generate", "--users", "150", "--days", "5", "--towers", "80", "--zones", "40,10,4",
                 "--seed", "3", "--out", str(out)]) == 0
    return out


def _inputs(d, cdr="cdr.csv", hier="map.csv"):
    return ["--cdr", str(d / cdr), "--hierarchy", str(d / hier)]


def test_generate_writes_identical_files(tmp_path):
    args = ["generate", "--users", "50", "--days", "3", "--towers", "30", "--zones", "20,6,2", "--seed", "1"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("cdr.csv", "hierarchy.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_generate_usage_errors(tmp_path, capsys):
    assert main(["generate"]) == 2
    assert main(["generate", "--users", "0", "--out", str(tmp_path)]) == 2
    assert main(["generate", "--towers", "5", "--zones", "10,2", "--out", str(tmp_path)]) == 2
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["generate", "--users", "5", "--out", str(blocker / "sub")]) == 2
    assert "error" in capsys.readouterr().err


def test_assess_full_grid(synth, tmp_path):
    out = tmp_path / "r.csv"
    assert main(["assess", *_inputs(synth, hier="hierarchy.csv"), "--trials", "3", "--unicity-trials", "20",
                 "--bootstrap", "50", "--format", "csv", "--out", str(out)]) == 0
    rows = list(csv.DictReader(io.StringIO(out.read_text())))
    assert [r["profile"] for r in rows] == [f"{lv}{h}" for lv in "ZDM" for h in (1, 6, 12, 24)]


def test_assess_two_user_fixture_matches_oracle(fixture_files, tmp_path):
    out = tmp_path / "r.json"
    assert main(["assess", *_inputs(fixture_files), "--spatial", "zip", "--temporal", "1",
                 "--trials", "10000", "--out", str(out)]) == 0
    (row,) = json.loads(out.read_text())["profiles"]
    traces = {"u1": {A, B}, "u2": {A, C}}
    costs = {u: oracles.exact_expected_cost(traces, u) for u in traces}
    assert row["c"] == pytest.approx(sum(costs.values()) / 2, abs=0.02)
    assert row["r"] == pytest.approx(sum(c / 2 for c in costs.values()) / 2, abs=0.02)
    assert row["k_anonymity"] == 1


def test_assess_with_pareto(fixture_files, tmp_path):
    (fixture_files / "u.csv").write_text("spatial_level,temporal_granularity,score\nzip,1,9.3\nZIP,24,7\ndistrict,24,4\n")
    out = tmp_path / "r.json"
    assert main(["assess", *_inputs(fixture_files), "--spatial", "zip,district", "--temporal", "1,24",
                 "--utility", str(fixture_files / "u.csv"), "--pareto", "--out", str(out)]) == 2
    (fixture_files / "u.csv").write_text(
        "spatial_level,temporal_granularity,score\nzip,1,9.3\nzip,24,7\ndistrict,1,5\ndistrict,24,4\n")
    assert main(["assess", *_inputs(fixture_files), "--spatial", "zip,district", "--temporal", "1,24",
                 "--utility", str(fixture_files / "u.csv"), "--pareto", "--out", str(out)]) == 0
    assert "pareto" in json.loads(out.read_text())


def test_assess_usage_and_data_errors(fixture_files, tmp_path, capsys):
    base = ["assess", *_inputs(fixture_files)]
    assert main(base + ["--pareto"]) == 2
    assert main(base + ["--spatial", "county"]) == 2
    assert main(base + ["--temporal", "5"]) == 2
    assert main(["assess", "--cdr", str(tmp_path / "nope.csv"), "--hierarchy", str(fixture_files / "map.csv")]) == 2
    (fixture_files / "bad.csv").write_text(TWO_USER_CDR.replace("2013-03-01 10:40", "yesterday"))
    capsys.readouterr()
    assert main(["assess", *_inputs(fixture_files, cdr="bad.csv")]) == 3
    assert "line 3" in capsys.readouterr().err


def test_unicity_fixture(fixture_files, capsys):
    assert main(["unicity", *_inputs(fixture_files), "--p", "1,2", "--trials", "10000", "--format", "csv"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    u = {int(r["p"]): float(r["u_p"]) for r in rows}
    assert u[1] == pytest.approx(0.5, abs=0.02) and u[2] == 1.0
    assert [int(r["eligible"]) for r in rows] == [2, 2]


def test_unicity_rejects_p_zero(fixture_files):
    assert main(["unicity", *_inputs(fixture_files), "--p", "0"]) == 2


def _run(args, threads=None):
    cmd = [sys.executable, "-m", "reidrisk"] + (["--threads", str(threads)] if threads else []) + args
    return subprocess.run(cmd, capture_output=True, check=True, env=os.environ.copy())


def test_unicity_same_seed_same_bytes(synth, tmp_path):
    args = ["unicity", *_inputs(synth, hier="hierarchy.csv"), "--p", "1,2,3", "--trials", "200", "--seed", "9"]
    for name, threads in (("a", None), ("b", None), ("c", 1), ("d", 3)):
        _run(args + ["--out", str(tmp_path / name)], threads)
    data = [(tmp_path / n).read_bytes() for n in "abcd"]
    assert data[0] == data[1] == data[2] == data[3]


def test_assess_same_seed_same_bytes(synth, tmp_path):
    args = ["assess", *_inputs(synth, hier="hierarchy.csv"), "--spatial", "zip,municipality", "--temporal", "1,24",
            "--trials", "5", "--unicity-trials", "50", "--seed", "4"]
    a = _run(args).stdout
    b = _run(args, threads=2).stdout
    assert a == b and json.loads(a)["config"]["seed"] == 4
