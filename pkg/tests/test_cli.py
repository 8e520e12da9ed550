import json
import subprocess
import sys

import pytest

from odecert import problem_path
from odecert.cli import main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def write(tmp_path, text, name="p.hprog"):
    f = tmp_path / name
    f.write_text(text)
    return f


# -------------------------------------------------------------- verify

@pytest.mark.parametrize("name, code", [
    ("blood_sugar", 0), ("diffinduct", 0), ("conserved", 0), ("rotational3", 0),
    ("odes", 0), ("rocket", 2), ("planar_flight", 2),
])
def test_verify_exit_codes(capsys, name, code):
    got, out, _ = run(capsys, "verify", problem_path(name))
    assert got == code, out


def test_verify_strategy_override(capsys):
    code, out, _ = run(capsys, "verify", problem_path("rotational3"), "--strategy-override", "dinduct")
    assert code == 0
    assert "dinv" in out


def test_verify_refuted(capsys, tmp_path):
    f = write(tmp_path, "problem r { variables { x; } goal g: hoare {true} x := 0 {x > 0}; }")
    code, out, _ = run(capsys, "verify", f)
    assert code == 1
    assert "refuted" in out


def test_verify_parse_error(capsys, tmp_path):
    f = write(tmp_path, "problem r { variables { x; } goal g: hoare {true} x := {x > 0}; }")
    code, _, err = run(capsys, "verify", f)
    assert code == 3 and "line 1" in err


def test_verify_missing_file(capsys, tmp_path):
    code, _, err = run(capsys, "verify", tmp_path / "nope.hprog")
    assert code == 3 and err


def test_verify_json_schema(capsys):
    code, out, _ = run(capsys, "verify", problem_path("blood_sugar"), "--json", "--seed", "5")
    data = json.loads(out)
    assert data["problem"] == "blood_sugar"
    for g in data["goals"]:
        assert set(g) == {"name", "kind", "status", "vcs"}
        for entry in g["vcs"]:
            assert set(entry["vc"]) >= {"label", "context", "binders", "goal"}
            assert entry["result"]["status"] in ("proved", "refuted", "unknown")
            for b in entry["vc"]["binders"]:
                assert set(b) >= {"name", "kind", "lo", "hi"}


def test_json_reproducible_bytes():
    cmd = [sys.executable, "-m", "odecert", "verify", str(problem_path("planar_flight")),
           "--json", "--seed", "11", "--samples", "300"]
    a = subprocess.run(cmd, capture_output=True).stdout
    b = subprocess.run(cmd, capture_output=True).stdout
    assert a and a == b


def test_seed_from_environment(monkeypatch, capsys, tmp_path):
    f = write(tmp_path, "problem r { variables { x; } goal g: hoare {true} x := x {x > 1}; }")
    monkeypatch.setenv("ODECERT_SEED", "3")
    _, a, _ = run(capsys, "verify", f, "--json")
    _, b, _ = run(capsys, "verify", f, "--json", "--seed", "3")
    assert a == b


# -------------------------------------------------------------- find-flow

def test_find_flow_unit(capsys):
    code, out, _ = run(capsys, "find-flow", problem_path("odes"), "--def", "unit")
    assert code == 0
    assert out.strip().splitlines()[0] == "using flow [x ~> t + $x]"


def test_find_flow_affine(capsys):
    code, out, _ = run(capsys, "find-flow", problem_path("odes"), "--def", "affine")
    assert code == 0
    assert "exp(a*t)" in out and "provided a != 0" in out


def test_find_flow_no_solution(capsys):
    code, out, _ = run(capsys, "find-flow", problem_path("odes"), "--def", "quartic")
    assert code == 2
    assert "NoSolutionFound" in out and "failed" in out


def test_find_flow_print_request(capsys):
    code, out, _ = run(capsys, "find-flow", problem_path("odes"), "--def", "unit",
                       "--backend", "print-request")
    assert code == 0 and out.strip() == "DSolve[{a'[t] == 1, a[0] == a0}, {a}, t]"


def test_find_flow_wolfram_unavailable(capsys, monkeypatch):
    monkeypatch.setenv("ODECERT_WOLFRAMSCRIPT", "/nonexistent/wolframscript")
    code, _, err = run(capsys, "find-flow", problem_path("odes"), "--def", "unit",
                       "--backend", "wolfram")
    assert code == 3 and "unavailable" in err


def test_find_flow_bad_def(capsys):
    code, _, err = run(capsys, "find-flow", problem_path("odes"), "--def", "missing")
    assert code == 3 and "missing" in err


# -------------------------------------------------------------- certify

SODE = """problem s { variables { x; y; z; }
  def sode = {x' = y, y' = z, z' = 1}; }"""


def test_certify_sode(capsys, tmp_path):
    f = write(tmp_path, SODE)
    code, out, _ = run(capsys, "certify", f, "--def", "sode", "--flow",
                       "[x ~> t^3/6 + $z*t^2/2 + $y*t + $x, y ~> t^2/2 + $z*t + $y, z ~> t + $z]")
    assert code == 0, out
    assert out.strip().endswith("status: certified")


def test_certify_wrong_candidate(capsys, tmp_path):
    f = write(tmp_path, SODE)
    code, out, _ = run(capsys, "certify", f, "--def", "sode", "--flow",
                       "[x ~> t^3/5 + $z*t^2/2 + $y*t + $x, y ~> t^2/2 + $z*t + $y, z ~> t + $z]")
    assert code == 1
    assert "x: d/dt" in out and "not-equal" in out.splitlines()[0]


def test_certify_open_proviso(capsys, tmp_path):
    # the identities and the initial condition hold, but sqrt needs t > 0, which fails at t = 0
    f = write(tmp_path, "problem q { variables { x; } def d = {x' = 0}; }")
    code, out, _ = run(capsys, "certify", f, "--def", "d", "--flow",
                       "[x ~> $x + sqrt(t) - sqrt(t)]")
    assert code == 2
    assert "certified-with-open-provisos" in out


def test_certify_frame_mismatch(capsys, tmp_path):
    f = write(tmp_path, SODE)
    code, _, err = run(capsys, "certify", f, "--def", "sode", "--flow", "[x ~> $x]")
    assert code == 3 and err


# -------------------------------------------------------------- export-smt

def test_export_diffinduct(capsys, tmp_path):
    code, out, _ = run(capsys, "export-smt", problem_path("diffinduct"), "--out", tmp_path / "o")
    assert code == 0
    assert len(list((tmp_path / "o").glob("*.smt2"))) == 2


def test_export_skips_transcendental(capsys, tmp_path):
    code, out, _ = run(capsys, "export-smt", problem_path("blood_sugar"), "--goal", "safe_flow",
                       "--out", tmp_path / "o")
    assert code == 0 and "skipped safe_flow/loop-body: transcendental" in out
    code, out, _ = run(capsys, "export-smt", problem_path("planar_flight"), "--goal",
                       "plant_safe_J", "--out", tmp_path / "j", "--abstract-transcendentals")
    files = list((tmp_path / "j").glob("*.smt2"))
    assert files and all("uninterpreted" in p.read_text() for p in files
                         if "sin" in p.read_text())


def test_export_rocket_bounded(capsys, tmp_path):
    code, out, _ = run(capsys, "export-smt", problem_path("rocket"), "--goal", "bounded",
                       "--out", tmp_path)
    files = list(tmp_path.glob("*.smt2"))
    assert code == 0 and len(files) == 1
    assert "(set-logic NRA)" in files[0].read_text()


def test_export_empty_goal_set(capsys, tmp_path):
    f = write(tmp_path, "problem e { variables { x; } }")
    code, out, err = run(capsys, "export-smt", f, "--out", tmp_path / "o")
    assert code == 0 and "warning" in err
    assert not list((tmp_path / "o").glob("*")) if (tmp_path / "o").exists() else True


def test_usage_error(capsys):
    code, _, _ = run(capsys, "frobnicate")
    assert code == 3
