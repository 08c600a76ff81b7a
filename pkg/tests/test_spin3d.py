"""3-D scenes: spin solving, current decomposition, and the velocity verdict."""

import numpy as np
import pytest

from qtraj.qshje import Constants
from qtraj.spin3d import (
    FieldScene,
    Grid3D,
    brute_force_spin_scan,
    curl_sampled,
    current_decomposition,
    current_vs_trajectory_report,
    div_sampled,
    example_4m_build,
    example_4m_family,
    gauge_shift_check,
    grad_sampled,
    madelung_velocities,
    plane_wave_family,
    quantum_potential_3d,
    solve_spin,
    solve_spin_field,
    speed_identity,
    spin_constraint_residuals,
    stationary_residual,
    time_field_3d,
)

C = Constants(m=1.0, hbar=1.0)
GRID = Grid3D((-1.0, 1.0, 21), (-1.0, 1.0, 21), (-1.0, 1.0, 21))
GRID_4M = Grid3D((-1.0, 1.0, 25), (0.1, 2.0, 25), (-1.0, 1.0, 25))


def test_grid3d_and_vector_calculus():
    X, Y, Z = GRID.meshgrid()
    f = X**2 * Y + Z
    g = grad_sampled(f, GRID)
    sel = GRID.interior()
    assert np.max(np.abs(g[0] - 2 * X * Y)[sel]) < 1e-10
    vec = np.stack([Y * Z, X * Z, X * Y])
    assert np.max(np.abs(curl_sampled(vec, GRID))[(slice(None), *sel)]) < 1e-10
    assert np.max(np.abs(div_sampled(vec, GRID))[sel]) < 1e-10


def test_spin_closed_form_and_constraints():
    v_B = np.array([1.0, 0.3, -0.2])
    v_S = np.array([0.1, 0.5, 0.4])
    sol = solve_spin(v_B, v_S)
    assert sol.multiplicity == "isolated_pair"
    for sign in (1.0, -1.0):
        resid = spin_constraint_residuals(sign * sol.s, v_B, v_S)
        assert np.max(np.abs(resid)) < 1e-10


def test_spin_multiplicity_flags():
    assert solve_spin(np.array([1.0, 0.0, 0.0]), np.zeros(3)).multiplicity == "degenerate"
    fam = solve_spin(np.array([2.0, 0.0, 0.0]), np.array([1.0, 0.0, 0.0]))
    assert fam.multiplicity == "one_parameter_family"


def test_brute_force_scan_confirms_closed_form():
    v_B = np.array([1.0, 0.3, -0.2])
    v_S = np.array([0.1, 0.5, 0.4])
    sol = solve_spin(v_B, v_S)
    pts, resid = brute_force_spin_scan(v_B, v_S, n_points=200_000)
    assert len(pts) > 0
    dist = np.minimum(
        np.linalg.norm(pts - sol.s, axis=1), np.linalg.norm(pts + sol.s, axis=1)
    )
    assert np.max(dist) < 2e-2


def test_solve_spin_field_marks_degenerate_points():
    shape = (3, 2, 2, 2)
    v_B = np.ones(shape)
    v_S = np.zeros(shape)
    v_S[1, 0, 0, 0] = 0.5
    s, degen = solve_spin_field(v_B, v_S)
    assert degen.sum() == 7
    assert not degen[0, 0, 0]
    assert np.all(np.isnan(s[:, 1, 1, 1]))


@pytest.fixture(scope="module")
def scene_4m():
    scene, s_field, report = example_4m_build(1.0, 1.0, np.sqrt(2.0), 0.0, 1.0, C, GRID_4M)
    return scene, s_field, report


def test_4m_scene_is_a_stationary_solution(scene_4m):
    scene, _, report = scene_4m
    assert stationary_residual(scene, C).max < 1e-10
    assert report.eq17.max < 1e-6
    assert report.rho_identity.max < 1e-12
    assert report.grad_rho_direction.max < 1e-12


def test_4m_current_matches_supplied_eta(scene_4m):
    scene, s_field, report = scene_4m
    spin_scene = current_decomposition(scene, s_field, report.eta, C)
    assert spin_scene.div_J.max < 1e-10
    assert spin_scene.eta_match.max < 1e-10
    assert speed_identity(spin_scene, C).max < 1e-10


def test_gauge_shift_leaves_divergence_unchanged(scene_4m):
    scene, s_field, report = scene_4m
    spin_scene = current_decomposition(scene, s_field, report.eta, C)
    rep = gauge_shift_check(
        spin_scene, lambda x, y, z: (y * z, np.sin(x), x * y)
    )
    assert rep.max < 1e-8


def test_quantum_potential_routes_agree_analytic_and_sampled():
    fam = plane_wave_family(GRID, C)
    assert quantum_potential_3d(fam(0.5), C).max_difference < 1e-10

    X, Y, Z = GRID.meshgrid()
    rho_box = ((Y + 3.0) / 2.0) ** 2
    W_box = np.sqrt(2.0) * X
    scene = FieldScene.from_sampled(GRID, 1.0, rho_box, W_box,
                                    np.full(GRID.shape, 0.0))
    assert quantum_potential_3d(scene, C).max_difference < 1e-6


def test_current_decomposition_rejects_bad_inputs(scene_4m):
    scene, s_field, report = scene_4m
    with pytest.raises(ValueError):
        current_decomposition(scene, 2.0 * s_field, None, C)
    X, Y, Z = scene.grid.meshgrid()
    not_div_free = np.stack([X, Y, Z])
    with pytest.raises(ValueError):
        current_decomposition(scene, s_field, not_div_free, C)


def test_plane_wave_time_relation():
    fam = plane_wave_family(GRID, C)
    tf = time_field_3d(fam, 0.5, 1e-4, C)
    assert tf.time_relation.max < 1e-6
    assert tf.divergence_relation.max < 1e-6


def test_velocity_mismatch_verdict_plane_wave():
    fam = plane_wave_family(GRID, C)
    verdict = current_vs_trajectory_report(fam, 0.5, 1e-4, C)
    assert verdict.mismatch_min == pytest.approx(2.0, abs=1e-6)
    assert verdict.mismatch_max == pytest.approx(2.0, abs=1e-6)
    assert verdict.chain_identity_max < 1e-6
    assert verdict.v_dot_vB_residual_max < 1e-10
    assert not verdict.current_is_trajectory_velocity


def test_velocity_mismatch_verdict_4m_family():
    fam = example_4m_family(1.0, 1.0, 0.0, C, GRID_4M)
    verdict = current_vs_trajectory_report(fam, 1.0, 1e-4, C)
    assert verdict.mismatch_min > 0.1
    assert not verdict.current_is_trajectory_velocity


def test_non_solution_fields_fail_stationarity():
    X, Y, Z = GRID.meshgrid()
    rho_box = np.exp(-(X**2))
    W_box = X**2 + Y
    scene = FieldScene.from_sampled(GRID, 0.5, rho_box, W_box, np.zeros(GRID.shape))
    assert stationary_residual(scene, C).max > 1e-2


def test_family_guards():
    fam = plane_wave_family(GRID, C)
    with pytest.raises(ValueError):
        fam(-0.5)
    fam4 = example_4m_family(1.0, 1.0, 2.0, C, GRID_4M)
    with pytest.raises(ValueError):
        fam4(0.5)
