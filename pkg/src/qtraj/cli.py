"""Scenario-driven command-line harness.

    qtraj solve|trajectory|verify|spin --scenario <path> [--out <dir>]
                                       [--svg] [--suite <name>]

Exit codes: 0 success, 1 verification/solver failure, 2 input/schema error.
Outputs are byte-identical across reruns; the run timestamp goes to a
separate run.log, never into the CSV/JSON artifacts.
"""

from __future__ import annotations

import argparse
import datetime
import json
import math
import os
import sys
import tempfile

import jsonschema
import numpy as np

from . import floyd, qshje, spin3d
from .errors import QtrajError
from .numerics import Grid1D
from .potentials import make_potential
from .qshje import Constants, Microstate

SCHEMA_VERSION = "qtraj-scenario/1"

_NUM = {"type": "number"}
_SCENARIO_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["schema", "kind", "constants", "energy"],
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "kind": {"enum": ["1d", "3d"]},
        "constants": {
            "type": "object",
            "additionalProperties": False,
            "required": ["m", "hbar"],
            "properties": {"m": _NUM, "hbar": _NUM},
        },
        "energy": _NUM,
        "step_E": _NUM,
        "potential": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["free", "linear", "harmonic", "square_well", "tabulated"]},
                "slope": _NUM,
                "stiffness": _NUM,
                "depth": _NUM,
                "half_width": _NUM,
                "path": {"type": "string"},
            },
        },
        "microstate": {
            "type": "object",
            "additionalProperties": False,
            "required": ["a", "b", "c", "d"],
            "properties": {k: _NUM for k in ("a", "b", "c", "d", "W0", "q0")},
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "required": ["q_min", "q_max", "n"],
            "properties": {"q_min": _NUM, "q_max": _NUM, "n": {"type": "integer"}},
        },
        "trajectory": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"q0": _NUM},
        },
        "tamper": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"v_offset": _NUM},
        },
        "family": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["plane_wave", "family_4m"]},
                "direction": {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3},
                "alpha": _NUM,
                "beta": _NUM,
                "W2": _NUM,
            },
        },
        "grid3d": {
            "type": "object",
            "additionalProperties": False,
            "required": ["x", "y", "z"],
            "properties": {
                ax: {
                    "type": "array",
                    "items": _NUM,
                    "minItems": 3,
                    "maxItems": 3,
                }
                for ax in ("x", "y", "z")
            },
        },
    },
}

TOLERANCES = {
    "wronskian_drift": 1e-8,
    "continuity": 1e-6,
    "qshje_identity": 1e-9,
    "scriptW_vs_V_minus_E": 1e-5,
    "quantum_potential_two_routes": 1e-5,
    "mobius_invariance": 1e-6,
    "WpWpE_identity_rel": 1e-4,
    "time_cross_formula": 1e-5,
    "dtau_dt_consistency": 1e-6,
    "trajectory_round_trip": 1e-8,
    "stationary_madelung": 1e-6,
    "speed_identity": 1e-6,
    "spin_constraints": 1e-10,
    "quantum_potential_3d_routes": 1e-6,
    "div_J": 1e-6,
    "gauge_shift": 1e-8,
    "gradW_dot_gradt": 1e-6,
    "velocity_mismatch_exceeds": 0.1,
}


class ScenarioError(Exception):
    pass


def load_scenario(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioError(f"cannot read scenario: {exc}") from exc
    try:
        jsonschema.validate(doc, _SCENARIO_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ScenarioError(f"scenario schema violation: {exc.message}") from exc
    kind = doc["kind"]
    required_1d = ("potential", "microstate", "grid")
    required_3d = ("family", "grid3d")
    if kind == "1d":
        missing = [k for k in required_1d if k not in doc]
    else:
        missing = [k for k in required_3d if k not in doc]
    if missing:
        raise ScenarioError(f"scenario kind {kind!r} requires fields: {', '.join(missing)}")
    for field in doc.get("constants", {}).values():
        if not math.isfinite(field):
            raise ScenarioError("constants must be finite")
    return doc


def build_1d(doc: dict):
    constants = Constants(**doc["constants"])
    potential = make_potential(**doc["potential"])
    grid = Grid1D(**doc["grid"])
    micro = Microstate(**doc["microstate"])
    E = float(doc["energy"])
    step_E = float(doc.get("step_E", floyd.default_step_E(E)))
    return constants, potential, grid, micro, E, step_E


def build_3d(doc: dict):
    constants = Constants(**doc["constants"])
    g = doc["grid3d"]
    grid = spin3d.Grid3D(tuple(g["x"]), tuple(g["y"]), tuple(g["z"]))
    fam_doc = doc["family"]
    E = float(doc["energy"])
    step_E = float(doc.get("step_E", floyd.default_step_E(E)))
    if fam_doc["kind"] == "plane_wave":
        family = spin3d.plane_wave_family(
            grid, constants, tuple(fam_doc.get("direction", (1.0, 0.0, 0.0)))
        )
    else:
        family = spin3d.example_4m_family(
            fam_doc.get("alpha", 1.0), fam_doc.get("beta", 1.0),
            fam_doc.get("W2", 0.0), constants, grid,
        )
    return constants, grid, family, fam_doc, E, step_E


def _atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path: str, obj) -> None:
    _atomic_write(path, json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _log_run(out_dir: str, command: str) -> None:
    stamp = datetime.datetime.now(datetime.timezone.utc).isoformat()
    with open(os.path.join(out_dir, "run.log"), "a", encoding="utf-8") as fh:
        fh.write(f"{stamp} {command}\n")


def write_svg_line(path: str, xs, ys, xlabel: str, ylabel: str) -> None:
    """Minimal static SVG: axes, one polyline, labels."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    w, h, pad = 640, 480, 50
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    sx = (w - 2 * pad) / (x1 - x0 if x1 > x0 else 1.0)
    sy = (h - 2 * pad) / (y1 - y0 if y1 > y0 else 1.0)
    pts = " ".join(
        f"{pad + (x - x0) * sx:.2f},{h - pad - (y - y0) * sy:.2f}" for x, y in zip(xs, ys)
    )
    svg = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">\n'
        f'<rect width="{w}" height="{h}" fill="white"/>\n'
        f'<line x1="{pad}" y1="{h - pad}" x2="{w - pad}" y2="{h - pad}" stroke="black"/>\n'
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{h - pad}" stroke="black"/>\n'
        f'<polyline points="{pts}" fill="none" stroke="steelblue" stroke-width="1.5"/>\n'
        f'<text x="{w // 2}" y="{h - 10}" text-anchor="middle">{xlabel}</text>\n'
        f'<text x="15" y="{h // 2}" text-anchor="middle" '
        f'transform="rotate(-90 15 {h // 2})">{ylabel}</text>\n'
        "</svg>\n"
    )
    _atomic_write(path, svg)


def _check(name: str, value, tol) -> dict:
    ok = bool(value is None or (np.isfinite(value) and value <= tol))
    return {"name": name, "value": value, "tolerance": tol, "pass": ok}


def _check_at_least(name: str, value, floor) -> dict:
    ok = bool(value is not None and np.isfinite(value) and value > floor)
    return {"name": name, "value": value, "tolerance": floor, "pass": ok}


def _solve_slice(doc):
    constants, potential, grid, micro, E, step_E = build_1d(doc)
    basis = qshje.solve_basis(potential, E, grid, constants)
    slc = qshje.microstate_action(basis, micro, constants)
    return constants, potential, grid, micro, E, step_E, basis, slc


class _ShiftedPotential:
    """Potential with a constant offset, used by the tamper option."""

    def __init__(self, base, offset):
        self.base = base
        self.offset = offset
        self.kind = base.kind

    def __call__(self, q):
        return self.base(q) + self.offset


def _tampered(doc, potential):
    off = float(doc.get("tamper", {}).get("v_offset", 0.0))
    if off == 0.0:
        return potential
    return _ShiftedPotential(potential, off)


def cmd_solve(doc: dict, out_dir: str) -> int:
    constants, potential, grid, micro, E, step_E, basis, slc = _solve_slice(doc)
    check_pot = _tampered(doc, potential)
    qshje.export_action_slice(slc, os.path.join(out_dir, "slice.csv"))
    rep = qshje.verify_scriptW(slc, check_pot)
    summary = {
        "scriptW_residual": {"max": rep.max, "rms": rep.rms},
        "continuity_residual": qshje.continuity_residual(slc),
        "qshje_residual_max": float(np.max(np.abs(qshje.qshje_residual(slc, constants)))),
        "wronskian_drift": basis.wronskian_drift,
        "E": E,
    }
    _write_json(os.path.join(out_dir, "solve_summary.json"), summary)
    return 0


def cmd_trajectory(doc: dict, out_dir: str, svg: bool) -> int:
    constants, potential, grid, micro, E, step_E, basis, slc = _solve_slice(doc)
    deriv = floyd.energy_derivatives(potential, micro, E, step_E, grid, constants)
    q0 = float(doc.get("trajectory", {}).get("q0", micro.q0))
    traj = floyd.floyd_time(slc, deriv, q0, constants, potential)
    floyd.export_trajectory(traj, os.path.join(out_dir, "trajectory.csv"))
    if svg:
        write_svg_line(os.path.join(out_dir, "trajectory.svg"), traj.t, traj.q, "t", "q")
    return 0


def _suite_qshje(doc) -> list[dict]:
    constants, potential, grid, micro, E, step_E, basis, slc = _solve_slice(doc)
    check_pot = _tampered(doc, potential)
    checks = []
    checks.append(_check("wronskian_drift", basis.wronskian_drift, TOLERANCES["wronskian_drift"]))
    checks.append(_check("continuity", qshje.continuity_residual(slc), TOLERANCES["continuity"]))
    checks.append(
        _check(
            "qshje_identity",
            float(np.max(np.abs(qshje.qshje_residual(slc, constants)))),
            TOLERANCES["qshje_identity"],
        )
    )
    rep = qshje.verify_scriptW(slc, check_pot)
    checks.append(_check("scriptW_vs_V_minus_E", rep.max, TOLERANCES["scriptW_vs_V_minus_E"]))
    q_alt = qshje.quantum_potential_from_amplitude(slc, constants)
    # the amplitude route differentiates R numerically, so it is meaningless
    # within a stencil width of a potential jump; mask those neighbourhoods
    V = np.asarray(potential(grid.nodes), dtype=float)
    dV = np.abs(np.diff(V))
    scale = max(1.0, float(np.max(np.abs(V))))
    padded = np.concatenate([[0.0], dV, [0.0]])
    jump = dV > 8.0 * (padded[:-2] + padded[2:]) + 1e-12 * scale
    ok = np.ones(grid.n, dtype=bool)
    for i in np.nonzero(jump)[0]:
        ok[max(0, i - 5) : min(grid.n, i + 6)] = False
    ok[: 4] = ok[-4:] = False
    checks.append(
        _check(
            "quantum_potential_two_routes",
            float(np.max(np.abs(q_alt.values[ok] - slc.Q.values[ok]))),
            TOLERANCES["quantum_potential_two_routes"],
        )
    )
    rng = np.random.default_rng(20260823)
    base = rep.max
    worst = 0.0
    for _ in range(3):
        while True:
            A, B, C, D = rng.uniform(-2, 2, size=4)
            if abs(A * D - B * C) > 0.1:
                break
        m2 = qshje.mobius_apply(micro, A, B, C, D)
        slc2 = qshje.microstate_action(basis, m2, constants)
        rep2 = qshje.verify_scriptW(slc2, check_pot)
        worst = max(worst, abs(rep2.max - base))
    checks.append(_check("mobius_invariance", worst, TOLERANCES["mobius_invariance"]))
    return checks


def _suite_floyd(doc) -> list[dict]:
    constants, potential, grid, micro, E, step_E, basis, slc = _solve_slice(doc)
    deriv = floyd.energy_derivatives(potential, micro, E, step_E, grid, constants)
    checks = []
    rep = floyd.identity_WpWpE(slc, deriv, constants)
    checks.append(_check("WpWpE_identity_rel", rep.params["rel"], TOLERANCES["WpWpE_identity_rel"]))
    q0 = float(doc.get("trajectory", {}).get("q0", micro.q0))
    traj = floyd.floyd_time(slc, deriv, q0, constants, potential)
    mask = traj.u_valid & (traj.e_minus_u >= 0.1)
    cross = float(np.max(np.abs(traj.t_alt[mask] - traj.t[mask]))) if np.any(mask) else None
    checks.append(_check("time_cross_formula", cross, TOLERANCES["time_cross_formula"]))
    cons = float(np.max(np.abs(traj.dtau_dt * (1.0 - deriv.Q_E.values) - 1.0)))
    checks.append(_check("dtau_dt_consistency", cons, TOLERANCES["dtau_dt_consistency"]))
    d = np.diff(traj.t)
    if np.all(d > 0) or np.all(d < 0):
        mid = traj.t[len(traj.t) // 3]
        rt = abs(floyd.trajectory_at(traj, float(mid)) - traj.q[len(traj.t) // 3])
        checks.append(_check("trajectory_round_trip", float(rt), TOLERANCES["trajectory_round_trip"]))
    else:
        checks.append(_check("trajectory_round_trip", None, TOLERANCES["trajectory_round_trip"]))
    return checks


def _suite_spin(doc) -> list[dict]:
    constants, grid, family, fam_doc, E, step_E = build_3d(doc)
    scene = family(E)
    checks = []
    checks.append(
        _check("stationary_madelung", spin3d.stationary_residual(scene, constants).max,
               TOLERANCES["stationary_madelung"])
    )
    qp = spin3d.quantum_potential_3d(scene, constants)
    checks.append(
        _check("quantum_potential_3d_routes", qp.max_difference,
               TOLERANCES["quantum_potential_3d_routes"])
    )
    v_B, v_S = spin3d.madelung_velocities(scene, constants)
    s_field, degen = spin3d.solve_spin_field(v_B, v_S)
    if np.all(degen):
        s_used = np.stack([np.ones(grid.shape), np.zeros(grid.shape), np.zeros(grid.shape)])
        checks.append(_check("spin_constraints", None, TOLERANCES["spin_constraints"]))
    else:
        s_used = np.where(np.isfinite(s_field), s_field, 0.0)
        ok = ~degen
        r2 = np.abs(np.sum(v_S * s_used, axis=0))[ok]
        r3 = np.abs(np.sum(v_B * np.cross(v_S, s_used, axis=0), axis=0))[ok]
        checks.append(
            _check("spin_constraints", float(max(np.max(r2), np.max(r3))),
                   TOLERANCES["spin_constraints"])
        )
        s_used[:, degen] = np.stack([np.ones(int(degen.sum())),
                                     np.zeros(int(degen.sum())),
                                     np.zeros(int(degen.sum()))])
    spin_scene = spin3d.current_decomposition(scene, s_used, None, constants)
    checks.append(_check("div_J", spin_scene.div_J.max, TOLERANCES["div_J"]))
    checks.append(
        _check("speed_identity", spin3d.speed_identity(spin_scene, constants).max,
               TOLERANCES["speed_identity"])
    )
    gauge = spin3d.gauge_shift_check(
        spin_scene, lambda x, y, z: (np.zeros_like(x), np.zeros_like(x), x * y)
    )
    checks.append(_check("gauge_shift", gauge.max, TOLERANCES["gauge_shift"]))
    tf = spin3d.time_field_3d(family, E, step_E, constants)
    checks.append(_check("gradW_dot_gradt", tf.time_relation.max, TOLERANCES["gradW_dot_gradt"]))
    verdict = spin3d.current_vs_trajectory_report(family, E, step_E, constants)
    checks.append(
        _check_at_least("velocity_mismatch_exceeds", verdict.mismatch_min,
                        TOLERANCES["velocity_mismatch_exceeds"])
    )
    return checks


def cmd_verify(doc: dict, out_dir: str, suite: str) -> int:
    kind = doc["kind"]
    suites = []
    if suite == "all":
        suites = ["qshje", "floyd"] if kind == "1d" else ["spin"]
    else:
        if suite in ("qshje", "floyd") and kind != "1d":
            raise ScenarioError(f"suite {suite!r} needs a 1-D scenario")
        if suite == "spin" and kind != "3d":
            raise ScenarioError("suite 'spin' needs a 3-D scenario")
        suites = [suite]
    checks = []
    for s in suites:
        runner = {"qshje": _suite_qshje, "floyd": _suite_floyd, "spin": _suite_spin}[s]
        for c in runner(doc):
            c["suite"] = s
            checks.append(c)
    all_pass = all(c["pass"] for c in checks)
    _write_json(os.path.join(out_dir, "verify.json"), {"checks": checks, "pass": all_pass})
    for c in checks:
        status = "PASS" if c["pass"] else "FAIL"
        print(f"[{status}] {c['suite']}/{c['name']}: value={c['value']} tol={c['tolerance']}")
    return 0 if all_pass else 1


def cmd_spin(doc: dict, out_dir: str) -> int:
    constants, grid, family, fam_doc, E, step_E = build_3d(doc)
    scene = family(E)
    if fam_doc["kind"] == "family_4m":
        m = constants.m
        W2 = fam_doc.get("W2", 0.0)
        if 2.0 * m * E <= W2**2:
            raise ScenarioError("family_4m requires 2 m E > W2^2")
        w1 = math.sqrt(2.0 * m * E - W2**2)
        scene, s_field, rep4m = spin3d.example_4m_build(
            fam_doc.get("alpha", 1.0), fam_doc.get("beta", 1.0), w1, W2, E, constants, grid
        )
        eta = rep4m.eta
    else:
        v_B, v_S = spin3d.madelung_velocities(scene, constants)
        sf, degen = spin3d.solve_spin_field(v_B, v_S)
        s_field = np.where(np.isfinite(sf), sf, 0.0)
        s_field[:, degen] = np.stack([
            np.ones(int(degen.sum())), np.zeros(int(degen.sum())), np.zeros(int(degen.sum())),
        ])
        eta = None
        rep4m = None
    spin_scene = spin3d.current_decomposition(scene, s_field, eta, constants)
    spin3d.export_scene(spin_scene, os.path.join(out_dir, "scene.csv"))
    verdict = spin3d.current_vs_trajectory_report(family, E, step_E, constants)
    out = {
        "mismatch": {
            "min": verdict.mismatch_min,
            "max": verdict.mismatch_max,
            "mean": verdict.mismatch_mean,
        },
        "chain_identity_max": verdict.chain_identity_max,
        "v_dot_vB_residual_max": verdict.v_dot_vB_residual_max,
        "current_is_trajectory_velocity": verdict.current_is_trajectory_velocity,
        "div_J_max": spin_scene.div_J.max,
    }
    if spin_scene.eta_match is not None:
        out["J_vs_eta_max"] = spin_scene.eta_match.max
    if rep4m is not None:
        out["eq17_max"] = rep4m.eq17.max
        out["rho_identity_max"] = rep4m.rho_identity.max
    _write_json(os.path.join(out_dir, "spin_verdict.json"), out)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="qtraj", description=__doc__)
    parser.add_argument("command", choices=["solve", "trajectory", "verify", "spin"])
    parser.add_argument("--scenario", required=True)
    parser.add_argument("--out", default=".")
    parser.add_argument("--svg", action="store_true")
    parser.add_argument("--suite", default="all")
    try:
        args = parser.parse_args(argv)
    except SystemExit:
        return 2
    if args.suite not in ("qshje", "floyd", "spin", "all"):
        print(f"unknown suite: {args.suite!r}", file=sys.stderr)
        return 2
    try:
        doc = load_scenario(args.scenario)
        os.makedirs(args.out, exist_ok=True)
        _log_run(args.out, args.command)
        kind = doc["kind"]
        if args.command in ("solve", "trajectory") and kind != "1d":
            raise ScenarioError(f"command {args.command!r} needs a 1-D scenario")
        if args.command == "spin" and kind != "3d":
            raise ScenarioError("command 'spin' needs a 3-D scenario")
        if args.command == "solve":
            return cmd_solve(doc, args.out)
        if args.command == "trajectory":
            return cmd_trajectory(doc, args.out, args.svg)
        if args.command == "verify":
            return cmd_verify(doc, args.out, args.suite)
        return cmd_spin(doc, args.out)
    except (ScenarioError, ValueError, TypeError, KeyError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except QtrajError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
