"""Floydian time, quantum mass, trajectories, Legendre duality and the
Ehrenfest diagnostics."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .errors import DivergenceError, SingularityError
from .numerics import (
    Grid1D,
    SampledField1D,
    cumulative_integral,
    invert_monotone,
    uniform_diff,
)
from .potentials import Potential
from .qshje import ActionSlice, Constants, Microstate, microstate_action, solve_basis
from .reports import ResidualReport


def thread_cap() -> int:
    """Parallelism cap from QTRAJ_THREADS (defaults to the CPU count)."""
    raw = os.environ.get("QTRAJ_THREADS", "")
    try:
        cap = int(raw)
    except ValueError:
        cap = 0
    if cap < 1:
        cap = os.cpu_count() or 1
    return cap


@dataclass(frozen=True)
class EnergyDerivatives:
    """Energy derivatives of the microstate fields at fixed anchor."""

    grid: Grid1D
    E: float
    step_E: float
    W_E: SampledField1D
    W_EE: SampledField1D
    Q_E: SampledField1D
    m_Q: SampledField1D
    Wp_E: SampledField1D


@dataclass(frozen=True)
class Trajectory:
    """Sampled (q, t, tau, velocity) for one microstate.

    t_alt is the modified-potential quadrature form of the time; it is NaN
    where E - U is nonpositive (u_valid marks the usable nodes).
    """

    q: np.ndarray
    t: np.ndarray
    tau: np.ndarray
    qdot: np.ndarray
    dtau_dt: np.ndarray
    t_alt: np.ndarray = field(repr=False, default=None)
    e_minus_u: np.ndarray = field(repr=False, default=None)
    u_valid: np.ndarray = field(repr=False, default=None)


@dataclass(frozen=True)
class UncertaintyReport:
    q: float
    threshold: float
    feasibility: str
    ratio_sign: float


def microstate_at_energy(
    micro: Microstate, potential: Potential, E_base: float, E: float
) -> Microstate:
    """Carry a microstate across energies.

    The v-coefficients are rescaled by the ratio of anchor momenta so the
    free-particle family stays the plane-wave family (this is the reading of
    energy differentiation under which t = dW/dE reproduces q*sqrt(m/2E)
    for the free particle).  Falls back to fixed coefficients when the
    anchor is classically forbidden.
    """
    v0 = float(np.asarray(potential(np.array([micro.q0])))[0])
    if E_base - v0 > 0.0 and E - v0 > 0.0:
        sigma = math.sqrt((E - v0) / (E_base - v0))
    else:
        sigma = 1.0
    return Microstate(micro.a, micro.b * sigma, micro.c, micro.d * sigma, micro.W0, micro.q0)


def slice_at_energy(
    potential: Potential,
    micro: Microstate,
    E_base: float,
    E: float,
    grid: Grid1D,
    constants: Constants,
    substeps: int = 6,
) -> ActionSlice:
    m = microstate_at_energy(micro, potential, E_base, E)
    basis = solve_basis(potential, E, grid, constants, substeps=substeps)
    return microstate_action(basis, m, constants)


def energy_derivatives(
    potential: Potential,
    micro: Microstate,
    E: float,
    step_E: float,
    grid: Grid1D,
    constants: Constants,
    substeps: int = 6,
) -> EnergyDerivatives:
    """4th-order central differences in E over a five-slice stencil.

    All slices share the anchor (W0, q0); see microstate_at_energy for how
    the mixing coefficients travel across the stencil.
    """
    if step_E <= 0:
        raise ValueError(f"step_E must be positive, got {step_E}")
    offsets = (-2, -1, 0, 1, 2)
    energies = [E + k * step_E for k in offsets]
    with ThreadPoolExecutor(max_workers=min(len(energies), thread_cap())) as pool:
        slices = list(
            pool.map(
                lambda e: slice_at_energy(potential, micro, E, e, grid, constants, substeps),
                energies,
            )
        )
    W = np.stack([s.W.values for s in slices])
    Wp = np.stack([s.Wp.values for s in slices])
    Q = np.stack([s.Q.values for s in slices])

    def d1(f):
        return (f[0] - 8 * f[1] + 8 * f[3] - f[4]) / (12 * step_E)

    W_E = d1(W)
    Wp_E = d1(Wp)
    Q_E = d1(Q)
    W_EE = (-W[0] + 16 * W[1] - 30 * W[2] + 16 * W[3] - W[4]) / (12 * step_E**2)
    m_Q = constants.m * (1.0 - Q_E)
    mk = lambda a: SampledField1D(grid, a)
    return EnergyDerivatives(
        grid, float(E), float(step_E), mk(W_E), mk(W_EE), mk(Q_E), mk(m_Q), mk(Wp_E)
    )


def default_step_E(E: float) -> float:
    return 1e-4 * max(abs(E), 1.0)


def floyd_time(
    slc: ActionSlice,
    deriv: EnergyDerivatives,
    q0: float,
    constants: Constants,
    potential: Potential | None = None,
) -> Trajectory:
    """Floydian trajectory times along the grid.

    Primary t is the energy-derivative route t - t0 = W_E(q) - W_E(q0).
    When the potential is supplied, the modified-potential quadrature
    t - t0 = sqrt(m/2) * int (1 - Q_E)/sqrt(E - U) dx is also recorded
    (NaN where E - U <= 0).  tau - tau0 = m * int dx/W'.
    """
    grid = slc.grid
    if not grid.contains(q0):
        raise ValueError(f"q0={q0} outside the grid")
    m = constants.m
    Wp = slc.Wp.values
    if np.any(Wp == 0.0):
        node = int(np.nonzero(Wp == 0.0)[0][0])
        raise SingularityError("W' vanishes; tau is singular", node=node)

    t = deriv.W_E.values - deriv.W_E.at(q0)
    tau = m * cumulative_integral(SampledField1D(grid, 1.0 / Wp), q0).values
    one_minus_QE = 1.0 - deriv.Q_E.values
    qdot = Wp / deriv.m_Q.values
    dtau_dt = 1.0 / one_minus_QE

    t_alt = np.full(grid.n, np.nan)
    e_minus_u = None
    valid = np.zeros(grid.n, dtype=bool)
    if potential is not None:
        U = np.asarray(potential(grid.nodes), dtype=float) + slc.Q.values
        e_minus_u = slc.E - U
        pos = e_minus_u > 0.0
        anchor = int(np.argmin(np.abs(grid.nodes - q0)))
        if pos[anchor]:
            lo = anchor
            while lo > 0 and pos[lo - 1]:
                lo -= 1
            hi = anchor
            while hi < grid.n - 1 and pos[hi + 1]:
                hi += 1
            if hi - lo + 1 >= 9:
                sub = Grid1D(grid.nodes[lo], grid.nodes[hi], hi - lo + 1)
                sign = np.sign(Wp[anchor])
                integrand = (
                    sign
                    * math.sqrt(m / 2.0)
                    * one_minus_QE[lo : hi + 1]
                    / np.sqrt(e_minus_u[lo : hi + 1])
                )
                t_alt[lo : hi + 1] = cumulative_integral(
                    SampledField1D(sub, integrand), q0
                ).values
                valid[lo : hi + 1] = True
    return Trajectory(grid.nodes, t, tau, qdot, dtau_dt, t_alt, e_minus_u, valid)


def trajectory_at(traj: Trajectory, t: float) -> float:
    """q(t) by monotone inversion of the sampled time table."""
    return invert_monotone(traj.q, traj.t, t)


def export_trajectory(traj: Trajectory, path) -> None:
    cols = [
        ("q", traj.q),
        ("t", traj.t),
        ("tau", traj.tau),
        ("qdot", traj.qdot),
        ("dtau_dt", traj.dtau_dt),
    ]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(name for name, _ in cols) + "\n")
        for i in range(len(traj.q)):
            fh.write(",".join(f"{arr[i]:.17g}" for _, arr in cols) + "\n")


def identity_WpWpE(
    slc: ActionSlice, deriv: EnergyDerivatives, constants: Constants
) -> ResidualReport:
    """Residuals of W' * W'_E = m (1 - Q_E) over the interior."""
    sel = slc.grid.interior()
    lhs = slc.Wp.values[sel] * deriv.Wp_E.values[sel]
    rhs = constants.m * (1.0 - deriv.Q_E.values[sel])
    resid = lhs - rhs
    scale = max(np.max(np.abs(rhs)), np.max(np.abs(lhs)))
    rel = float(np.max(np.abs(resid)) / scale) if scale > 0 else math.inf
    return ResidualReport.from_residuals(
        "WpWpE_identity",
        resid,
        E=slc.E,
        step_E=deriv.step_E,
        rel=rel,
    )


@dataclass(frozen=True)
class LegendreReport:
    legendre: ResidualReport  # W = E*W_E - S round trip
    dual: ResidualReport  # dS/dt = E along the energy family


def legendre_check(
    potential: Potential,
    micro: Microstate,
    E_grid,
    q: float,
    constants: Constants,
    grid: Grid1D | None = None,
    substeps: int = 6,
) -> LegendreReport:
    """Legendre duality of W(E) and S(E) = E*W_E - W at fixed q.

    The supplied energies are where residuals are reported; internally the
    family is sampled on a twice-refined, edge-extended energy grid so the
    reported nodes only ever see central stencils.
    """
    E_grid = np.sort(np.asarray(E_grid, dtype=float))
    if len(E_grid) < 5:
        raise ValueError("E_grid needs at least 5 points")
    h_e = np.diff(E_grid)
    if not np.allclose(h_e, h_e[0], rtol=1e-8, atol=0.0):
        raise ValueError("E_grid must be uniform")
    if grid is None:
        lo = min(q, micro.q0) - 2.0
        hi = max(q, micro.q0) + 2.0
        grid = Grid1D(lo, hi, 2001)
    h_d = h_e[0] / 2.0
    pad = 4
    n_dense = 2 * (len(E_grid) - 1) + 1 + 2 * pad
    E_dense = E_grid[0] - pad * h_d + h_d * np.arange(n_dense)
    E_base = float(E_grid[len(E_grid) // 2])

    with ThreadPoolExecutor(max_workers=min(8, thread_cap())) as pool:
        W_at_q = np.fromiter(
            pool.map(
                lambda e: slice_at_energy(
                    potential, micro, E_base, float(e), grid, constants, substeps
                ).W.at(q),
                E_dense,
            ),
            dtype=float,
            count=n_dense,
        )
    W_E = uniform_diff(W_at_q, h_d, 1)
    W_EE = uniform_diff(W_at_q, h_d, 2)
    S = E_dense * W_E - W_at_q
    dS_dE = uniform_diff(S, h_d, 1)

    idx = pad + 2 * np.arange(len(E_grid))
    if np.any(W_EE[idx] == 0.0):
        raise SingularityError("W_EE vanishes on the energy grid")
    resid1 = W_at_q[idx] - (E_dense[idx] * W_E[idx] - S[idx])
    resid2 = dS_dE[idx] / W_EE[idx] - E_dense[idx]
    params = {"q": q, "E_min": float(E_grid[0]), "E_max": float(E_grid[-1])}
    return LegendreReport(
        ResidualReport.from_residuals("legendre_round_trip", resid1, **params),
        ResidualReport.from_residuals("legendre_dual_dS_dt", resid2, **params),
    )


def uncertainty_report(
    deriv: EnergyDerivatives, q: float, constants: Constants
) -> UncertaintyReport:
    """Sign rule for the trajectory-picture energy-time condition.

    Purely diagnostic: the threshold (1 - Q_E) hbar / (2 W_EE) is reported,
    never imposed on any solver.
    """
    Q_E = deriv.Q_E.at(q)
    W_EE = deriv.W_EE.at(q)
    if W_EE == 0.0:
        raise SingularityError(f"degenerate curvature: W_EE = 0 at q={q}")
    ratio = (1.0 - Q_E) / W_EE
    threshold = (1.0 - Q_E) * constants.hbar / (2.0 * W_EE)
    feasibility = (
        "admits_positive_deltaE" if ratio <= 0.0 else "requires_nonpositive_ratio"
    )
    return UncertaintyReport(q, threshold, feasibility, float(np.sign(ratio)))


@dataclass(frozen=True)
class GaussianPacket:
    center: float
    width: float
    momentum: float


@dataclass(frozen=True)
class EhrenfestReport:
    residual_max: float
    margin_min: float
    norm_drift: float
    energy_drift: float
    times: np.ndarray = field(repr=False)
    mean_q: np.ndarray = field(repr=False)
    dqdt: np.ndarray = field(repr=False)
    commutator: np.ndarray = field(repr=False)
    mean_p_over_m: np.ndarray = field(repr=False)


def build_box_hamiltonian(
    potential: Potential, constants: Constants, n_grid: int, lo: float, hi: float
):
    """Dirichlet-box Hamiltonian on n_grid nodes; returns (x, H, P_central)."""
    x = np.linspace(lo, hi, n_grid)
    h = x[1] - x[0]
    m, hbar = constants.m, constants.hbar
    main = np.full(n_grid, -2.0)
    off = np.ones(n_grid - 1)
    D2 = (np.diag(main) + np.diag(off, 1) + np.diag(off, -1)) / h**2
    H = -(hbar**2 / (2.0 * m)) * D2 + np.diag(np.asarray(potential(x), dtype=float))
    D1 = (np.diag(off, 1) - np.diag(off, -1)) / (2.0 * h)
    P = -1j * hbar * D1
    return x, H, P


def ehrenfest_check(
    potential: Potential,
    constants: Constants,
    n_grid: int,
    packet: GaussianPacket,
    t_span: float,
    dt: float,
    box: tuple[float, float] | None = None,
    initial_state: np.ndarray | None = None,
) -> EhrenfestReport:
    """Evolve a packet by exact small unitary steps and check the Ehrenfest
    relation d<Q>/dt = <i[H,Q]>/hbar plus the Robertson bound on (E, Q).
    """
    if n_grid < 200:
        raise ValueError("n_grid must be at least 200")
    m, hbar = constants.m, constants.hbar
    if box is None:
        travel = abs(packet.momentum) * t_span / m
        half = 8.0 * packet.width + travel
        box = (packet.center - half, packet.center + half)
    x, H, P = build_box_hamiltonian(potential, constants, n_grid, box[0], box[1])
    h = x[1] - x[0]
    Qm = np.diag(x)
    comm_op = (1j / hbar) * (H @ Qm - Qm @ H)
    H2 = H @ H

    if initial_state is None:
        psi = np.exp(
            -((x - packet.center) ** 2) / (4.0 * packet.width**2)
            + 1j * packet.momentum * x / hbar
        )
    else:
        psi = np.asarray(initial_state, dtype=complex).copy()
    psi[0] = psi[-1] = 0.0
    psi /= math.sqrt(float(np.sum(np.abs(psi) ** 2) * h))

    U = expm(-1j * H * dt / hbar)
    nsteps = int(round(t_span / dt))

    def expect(op_applied):
        return float(np.real(np.vdot(psi, op_applied) * h))

    mean_q = np.empty(nsteps + 1)
    comm = np.empty(nsteps + 1)
    p_over_m = np.empty(nsteps + 1)
    margin = np.empty(nsteps + 1)
    norm = np.empty(nsteps + 1)
    energy = np.empty(nsteps + 1)
    for k in range(nsteps + 1):
        norm[k] = float(np.sum(np.abs(psi) ** 2) * h)
        mean_q[k] = expect(x * psi)
        comm[k] = expect(comm_op @ psi)
        p_over_m[k] = expect(P @ psi) / m
        eH = expect(H @ psi)
        energy[k] = eH
        var_e = expect(H2 @ psi) - eH**2
        var_q = expect(x * x * psi) - mean_q[k] ** 2
        dE = math.sqrt(max(var_e, 0.0))
        dQ = math.sqrt(max(var_q, 0.0))
        margin[k] = dE * dQ - (hbar / 2.0) * abs(comm[k])
        if k < nsteps:
            psi = U @ psi

    norm_drift = float(np.max(np.abs(norm - norm[0])))
    if norm_drift > 1e-6:
        raise DivergenceError(f"norm drift {norm_drift:.3e} exceeds 1e-6")
    energy_drift = float(np.max(np.abs(energy - energy[0])))
    if energy_drift > 1e-8 * max(1.0, abs(energy[0])):
        raise DivergenceError(f"unitary-step energy drift {energy_drift:.3e} too large")

    times = dt * np.arange(nsteps + 1)
    dqdt = (mean_q[2:] - mean_q[:-2]) / (2.0 * dt)
    residual = float(np.max(np.abs(dqdt - comm[1:-1]))) if nsteps >= 2 else math.nan
    return EhrenfestReport(
        residual_max=residual,
        margin_min=float(np.min(margin)),
        norm_drift=norm_drift,
        energy_drift=energy_drift,
        times=times,
        mean_q=mean_q,
        dqdt=dqdt,
        commutator=comm,
        mean_p_over_m=p_over_m,
    )
