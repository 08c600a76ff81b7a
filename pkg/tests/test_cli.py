"""Scenario runner: exit codes, output artifacts, and determinism."""

import json

import pytest

from qtraj.cli import main

FREE = {
    "schema": "qtraj-scenario/1",
    "kind": "1d",
    "constants": {"m": 1.0, "hbar": 1.0},
    "potential": {"kind": "free"},
    "energy": 0.5,
    "microstate": {"a": 1.0, "b": 0.0, "c": 0.0, "d": 1.0, "W0": 0.0, "q0": 0.0},
    "grid": {"q_min": -8.0, "q_max": 8.0, "n": 401},
}

SPIN = {
    "schema": "qtraj-scenario/1",
    "kind": "3d",
    "constants": {"m": 1.0, "hbar": 1.0},
    "family": {"kind": "plane_wave", "direction": [1.0, 0.0, 0.0]},
    "energy": 0.5,
    "grid3d": {"x": [-1.0, 1.0, 13], "y": [-1.0, 1.0, 13], "z": [-1.0, 1.0, 13]},
}


def write_scenario(tmp_path, doc, name="scn.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def test_solve_writes_slice_and_summary(tmp_path):
    scn = write_scenario(tmp_path, FREE)
    out = tmp_path / "out"
    assert main(["solve", "--scenario", scn, "--out", str(out)]) == 0
    assert (out / "slice.csv").exists()
    summary = json.loads((out / "solve_summary.json").read_text())
    assert summary["scriptW_residual"]["max"] < 1e-6
    assert (out / "run.log").exists()


def test_solve_outputs_are_byte_identical_across_runs(tmp_path):
    scn = write_scenario(tmp_path, FREE)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["solve", "--scenario", scn, "--out", str(a)]) == 0
    assert main(["solve", "--scenario", scn, "--out", str(b)]) == 0
    assert (a / "slice.csv").read_bytes() == (b / "slice.csv").read_bytes()
    assert (a / "solve_summary.json").read_bytes() == (b / "solve_summary.json").read_bytes()


def test_trajectory_with_svg(tmp_path):
    scn = write_scenario(tmp_path, FREE)
    out = tmp_path / "out"
    assert main(["trajectory", "--scenario", scn, "--out", str(out), "--svg"]) == 0
    assert (out / "trajectory.csv").read_text().splitlines()[0] == "q,t,tau,qdot,dtau_dt"
    svg = (out / "trajectory.svg").read_text()
    assert svg.startswith("<svg") and "polyline" in svg


def test_verify_all_passes_on_free(tmp_path, capsys):
    scn = write_scenario(tmp_path, FREE)
    out = tmp_path / "out"
    assert main(["verify", "--scenario", scn, "--out", str(out)]) == 0
    report = json.loads((out / "verify.json").read_text())
    assert report["pass"] is True
    suites = {c["suite"] for c in report["checks"]}
    assert suites == {"qshje", "floyd"}
    lines = capsys.readouterr().out.splitlines()
    assert all(line.startswith("[PASS]") for line in lines if line)


def test_verify_spin_suite(tmp_path):
    scn = write_scenario(tmp_path, SPIN)
    out = tmp_path / "out"
    assert main(["verify", "--scenario", scn, "--out", str(out), "--suite", "spin"]) == 0
    report = json.loads((out / "verify.json").read_text())
    names = {c["name"] for c in report["checks"]}
    assert "velocity_mismatch_exceeds" in names


def test_spin_command_writes_scene_and_verdict(tmp_path):
    scn = write_scenario(tmp_path, SPIN)
    out = tmp_path / "out"
    assert main(["spin", "--scenario", scn, "--out", str(out)]) == 0
    verdict = json.loads((out / "spin_verdict.json").read_text())
    assert verdict["mismatch"]["min"] == pytest.approx(2.0, abs=1e-6)
    assert verdict["current_is_trajectory_velocity"] is False
    header = (out / "scene.csv").read_text().splitlines()[0]
    assert header == "x,y,z,rho,W,sx,sy,sz,Jx,Jy,Jz"


def test_tampered_potential_fails_state_function_check(tmp_path, capsys):
    doc = dict(FREE)
    doc["tamper"] = {"v_offset": 0.5}
    scn = write_scenario(tmp_path, doc)
    out = tmp_path / "out"
    assert main(["verify", "--scenario", scn, "--out", str(out), "--suite", "qshje"]) == 1
    report = json.loads((out / "verify.json").read_text())
    failed = [c["name"] for c in report["checks"] if not c["pass"]]
    assert failed == ["scriptW_vs_V_minus_E"]
    assert "[FAIL] qshje/scriptW_vs_V_minus_E" in capsys.readouterr().out


def test_unknown_scenario_key_is_rejected(tmp_path, capsys):
    doc = dict(FREE)
    doc["surprise"] = 1
    scn = write_scenario(tmp_path, doc)
    assert main(["solve", "--scenario", scn, "--out", str(tmp_path / "o")]) == 2
    assert "surprise" in capsys.readouterr().err


def test_degenerate_microstate_is_an_input_error(tmp_path, capsys):
    doc = dict(FREE)
    doc["microstate"] = {"a": 1.0, "b": 2.0, "c": 2.0, "d": 4.0}
    scn = write_scenario(tmp_path, doc)
    assert main(["solve", "--scenario", scn, "--out", str(tmp_path / "o")]) == 2
    assert "a*d - b*c" in capsys.readouterr().err


def test_command_kind_mismatch(tmp_path):
    scn1 = write_scenario(tmp_path, FREE, "a.json")
    scn3 = write_scenario(tmp_path, SPIN, "b.json")
    assert main(["spin", "--scenario", scn1, "--out", str(tmp_path / "o")]) == 2
    assert main(["solve", "--scenario", scn3, "--out", str(tmp_path / "o")]) == 2
    assert main(["verify", "--scenario", scn1, "--suite", "spin",
                 "--out", str(tmp_path / "o")]) == 2


def test_missing_file_and_bad_suite(tmp_path):
    assert main(["solve", "--scenario", str(tmp_path / "nope.json"),
                 "--out", str(tmp_path / "o")]) == 2
    scn = write_scenario(tmp_path, FREE)
    assert main(["verify", "--scenario", scn, "--suite", "bogus",
                 "--out", str(tmp_path / "o")]) == 2


def test_schema_version_is_enforced(tmp_path):
    doc = dict(FREE)
    doc["schema"] = "qtraj-scenario/0"
    scn = write_scenario(tmp_path, doc)
    assert main(["solve", "--scenario", scn, "--out", str(tmp_path / "o")]) == 2
