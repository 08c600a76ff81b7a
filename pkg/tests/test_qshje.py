"""Reduced-action construction, Schwarzian machinery, and basis solving."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qtraj.errors import DegenerateMicrostateError, SingularityError
from qtraj.numerics import Grid1D
from qtraj.potentials import FreePotential, HarmonicPotential, LinearPotential
from qtraj.qshje import (
    Constants,
    Microstate,
    continuity_residual,
    microstate_action,
    mobius_apply,
    qshje_residual,
    quantum_potential_from_amplitude,
    schwarzian,
    solve_basis,
    verify_scriptW,
    wavefunction,
)

C = Constants(m=1.0, hbar=1.0)


@pytest.fixture(scope="module")
def free_slice():
    grid = Grid1D(-10.0, 10.0, 2001)
    basis = solve_basis(FreePotential(), 0.5, grid, C)
    slc = microstate_action(basis, Microstate(1.0, 0.0, 0.0, 1.0), C)
    return basis, slc


def test_free_basis_matches_cos_sin(free_slice):
    basis, _ = free_slice
    q = basis.grid.nodes
    np.testing.assert_allclose(basis.u.values, np.cos(q), atol=1e-11)
    np.testing.assert_allclose(basis.v.values, np.sin(q), atol=1e-11)
    assert basis.wronskian == pytest.approx(1.0)
    assert basis.wronskian_drift < 1e-12


def test_free_action_is_plane_wave(free_slice):
    _, slc = free_slice
    q = slc.grid.nodes
    np.testing.assert_allclose(slc.W.values, q, atol=1e-10)
    np.testing.assert_allclose(slc.Wp.values, 1.0, atol=1e-11)
    assert np.max(np.abs(slc.Q.values)) < 1e-12
    assert np.max(np.abs(slc.scriptW.values + 0.5)) < 1e-11


def test_hamilton_jacobi_identity_is_exact(free_slice):
    _, slc = free_slice
    assert np.max(np.abs(qshje_residual(slc, C))) < 1e-14
    assert continuity_residual(slc) < 1e-12


def test_state_function_equals_V_minus_E_on_linear():
    grid = Grid1D(-5.0, 2.0, 2001)
    basis = solve_basis(LinearPotential(1.0), 1.0, grid, C)
    slc = microstate_action(basis, Microstate(1.0, 0.2, -0.3, 1.0, q0=-2.0), C)
    rep = verify_scriptW(slc, LinearPotential(1.0))
    assert rep.max < 1e-5
    assert np.max(np.abs(qshje_residual(slc, C))) < 1e-9


def test_amplitude_route_to_quantum_potential():
    grid = Grid1D(-5.0, 2.0, 2001)
    basis = solve_basis(LinearPotential(1.0), 1.0, grid, C)
    slc = microstate_action(basis, Microstate(1.0, 0.0, 0.0, 1.0, q0=-2.0), C)
    alt = quantum_potential_from_amplitude(slc, C)
    sel = grid.interior()
    assert np.max(np.abs(alt.values[sel] - slc.Q.values[sel])) < 1e-5


def test_degenerate_microstate_raises():
    with pytest.raises(DegenerateMicrostateError):
        Microstate(1.0, 2.0, 2.0, 4.0)


def test_schwarzian_of_linear_map_vanishes():
    from qtraj.numerics import SampledField1D

    g = Grid1D(0.5, 2.0, 101)
    q = g.nodes
    mk = lambda a: SampledField1D(g, a)
    f, fp = mk(2 * q + 1), mk(np.full_like(q, 2.0))
    fpp, fppp = mk(np.zeros_like(q)), mk(np.zeros_like(q))
    assert np.max(np.abs(schwarzian(f, fp, fpp, fppp).values)) < 1e-14
    with pytest.raises(SingularityError):
        schwarzian(f, mk(np.zeros_like(q)), fpp, fppp)


def test_mobius_action_leaves_state_function_invariant(free_slice):
    basis, slc = free_slice
    rng = np.random.default_rng(7)
    base = verify_scriptW(slc, FreePotential()).max
    for _ in range(5):
        A, B, Cc, D = rng.uniform(-2, 2, size=4)
        if abs(A * D - B * Cc) < 0.1:
            continue
        m2 = mobius_apply(Microstate(1.0, 0.0, 0.0, 1.0), A, B, Cc, D)
        rep = verify_scriptW(microstate_action(basis, m2, C), FreePotential())
        assert abs(rep.max - base) < 1e-9


@settings(max_examples=25, deadline=None)
@given(st.tuples(*[st.floats(-3, 3) for _ in range(8)]))
def test_mobius_composition_is_matrix_product(vals):
    A1, B1, C1, D1, A2, B2, C2, D2 = vals
    if abs(A1 * D1 - B1 * C1) < 1e-3 or abs(A2 * D2 - B2 * C2) < 1e-3:
        return
    micro = Microstate(1.0, 0.5, -0.5, 1.0)
    once = mobius_apply(mobius_apply(micro, A1, B1, C1, D1), A2, B2, C2, D2)
    M = np.array([[A2, B2], [C2, D2]]) @ np.array([[A1, B1], [C1, D1]])
    direct = mobius_apply(micro, M[0, 0], M[0, 1], M[1, 0], M[1, 1])
    for attr in ("a", "b", "c", "d"):
        assert getattr(once, attr) == pytest.approx(getattr(direct, attr), abs=1e-9)


def test_wavefunction_solves_schroedinger(free_slice):
    _, slc = free_slice
    for mode in ("standard", "paper"):
        _, resid = wavefunction(slc, 1.0, 0.5j, C, exponent_mode=mode)
        assert resid < 1e-6
    with pytest.raises(ValueError):
        wavefunction(slc, 1.0, 0.0, C, exponent_mode="bogus")


def test_harmonic_nonstationary_microstate_passes_checks():
    grid = Grid1D(-6.0, 6.0, 2401)
    basis = solve_basis(HarmonicPotential(1.0), 0.75, grid, C)
    slc = microstate_action(basis, Microstate(1.0, 0.3, 0.0, 1.0), C)
    assert verify_scriptW(slc, HarmonicPotential(1.0)).max < 1e-5
    assert np.max(np.abs(qshje_residual(slc, C))) < 1e-9


def test_export_slice_round_trips(free_slice, tmp_path):
    _, slc = free_slice
    from qtraj.qshje import export_action_slice

    path = tmp_path / "slice.csv"
    export_action_slice(slc, path)
    data = np.genfromtxt(path, delimiter=",", names=True)
    assert set(data.dtype.names) == {"q", "W", "Wp", "Wpp", "R", "rho", "Q", "scriptW"}
    np.testing.assert_allclose(data["W"], slc.W.values, rtol=0, atol=0)


def test_constants_validation():
    with pytest.raises(ValueError):
        Constants(m=-1.0, hbar=1.0)
    with pytest.raises(ValueError):
        Constants(m=1.0, hbar=0.0)
