"""Stationary-state trajectory machinery in 1-D.

Real basis pair for the Schrödinger equation, microstate reduced actions
with full Möbius freedom, the Schwarzian quantum potential, the state
function, and the wavefunction assembled back from a microstate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMicrostateError, DivergenceError, SingularityError
from .numerics import (
    Grid1D,
    SampledField1D,
    cumulative_integral,
    diff_central,
    uniform_diff,
)
from .potentials import Potential
from .reports import ResidualReport

_OVERFLOW_GUARD = 1e150


@dataclass(frozen=True)
class Constants:
    """Particle mass and action quantum."""

    m: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        if not (self.m > 0 and math.isfinite(self.m)):
            raise ValueError(f"mass must be positive and finite, got {self.m}")
        if not (self.hbar > 0 and math.isfinite(self.hbar)):
            raise ValueError(f"hbar must be positive and finite, got {self.hbar}")


@dataclass(frozen=True)
class BasisPair:
    """Two real solutions with unit Wronskian, anchored at the grid midpoint."""

    grid: Grid1D
    E: float
    u: SampledField1D
    v: SampledField1D
    up: SampledField1D
    vp: SampledField1D
    upp: SampledField1D
    vpp: SampledField1D
    wronskian: float
    wronskian_drift: float
    anchor_index: int


@dataclass(frozen=True)
class Microstate:
    """Mixing coefficients plus the action anchor (W0 at q0).

    (a, b, c, d) modulo overall scale carry the three-parameter freedom of
    the third-order equation for W.
    """

    a: float
    b: float
    c: float
    d: float
    W0: float = 0.0
    q0: float = 0.0

    def __post_init__(self):
        if self.det == 0.0:
            raise DegenerateMicrostateError(
                f"degenerate microstate: a*d - b*c = 0 for ({self.a}, {self.b}, {self.c}, {self.d})"
            )
        for name in ("a", "b", "c", "d", "W0", "q0"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"microstate field {name} must be finite")

    @property
    def det(self) -> float:
        return self.a * self.d - self.b * self.c


@dataclass(frozen=True)
class ActionSlice:
    """Reduced action and derived fields for one microstate at fixed energy."""

    grid: Grid1D
    E: float
    W: SampledField1D
    Wp: SampledField1D
    Wpp: SampledField1D
    Wppp: SampledField1D
    R: SampledField1D
    rho: SampledField1D
    Q: SampledField1D
    scriptW: SampledField1D


def _rk4_pair(g_fine, nodes_h, anchor, n, substeps, direction, out):
    """March the coupled (u, u', v, v') system one grid cell at a time.

    g_fine holds 2m/hbar^2 * (V - E) sampled at half-substep resolution so
    every RK4 stage lands on a precomputed point (cell-aligned stepping; a
    square-well jump at a node never falls inside a stage).
    """
    u, up, v, vp = out
    hs = direction * nodes_h / substeps
    y = np.array([u[anchor], up[anchor], v[anchor], vp[anchor]])
    node = anchor
    while 0 <= node + direction < n:
        base = 2 * substeps * node
        for j in range(substeps):
            i0 = base + direction * 2 * j
            g0 = g_fine[i0]
            gh = g_fine[i0 + direction]
            g1 = g_fine[i0 + 2 * direction]
            k1 = np.array([y[1], g0 * y[0], y[3], g0 * y[2]])
            y2 = y + 0.5 * hs * k1
            k2 = np.array([y2[1], gh * y2[0], y2[3], gh * y2[2]])
            y3 = y + 0.5 * hs * k2
            k3 = np.array([y3[1], gh * y3[0], y3[3], gh * y3[2]])
            y4 = y + hs * k3
            k4 = np.array([y4[1], g1 * y4[0], y4[3], g1 * y4[2]])
            y = y + (hs / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if max(abs(y[0]), abs(y[2])) > _OVERFLOW_GUARD:
            raise DivergenceError(
                f"basis solution exceeded overflow guard near node {node + direction}"
            )
        node += direction
        u[node], up[node], v[node], vp[node] = y


def solve_basis(
    potential: Potential,
    E: float,
    grid: Grid1D,
    constants: Constants,
    substeps: int = 6,
) -> BasisPair:
    """Integrate the stationary Schrödinger equation for a real basis pair.

    u(q0)=1, u'(q0)=0, v(q0)=0, v'(q0)=1 at the node nearest the grid
    midpoint, marched outward with fixed-step classic 4th-order steps.
    """
    if not math.isfinite(E):
        raise ValueError("energy must be finite")
    n = grid.n
    anchor = int(round((0.5 * (grid.q_min + grid.q_max) - grid.q_min) / grid.h))
    anchor = min(max(anchor, 0), n - 1)

    fine_n = 2 * substeps * (n - 1) + 1
    q_fine = np.linspace(grid.q_min, grid.q_max, fine_n)
    g_fine = (2.0 * constants.m / constants.hbar**2) * (
        np.asarray(potential(q_fine), dtype=float) - E
    )

    u = np.zeros(n)
    up = np.zeros(n)
    v = np.zeros(n)
    vp = np.zeros(n)
    u[anchor], vp[anchor] = 1.0, 1.0
    out = (u, up, v, vp)
    _rk4_pair(g_fine, grid.h, anchor, n, substeps, +1, out)
    _rk4_pair(g_fine, grid.h, anchor, n, substeps, -1, out)

    g_nodes = g_fine[:: 2 * substeps]
    upp = g_nodes * u
    vpp = g_nodes * v
    w = u * vp - up * v
    w0 = w[anchor]
    # measure the drift relative to the size of the cancelling products, so
    # exponentially growing bases in forbidden regions do not swamp it with
    # rounding noise
    scale = np.maximum(np.abs(u * vp) + np.abs(up * v), abs(w0))
    drift = float(np.max(np.abs(w - w0) / scale))
    if np.min(u * u + v * v) <= 0.0:
        raise DivergenceError("basis solutions vanish simultaneously at a node")
    mk = lambda a: SampledField1D(grid, a)
    return BasisPair(
        grid, float(E), mk(u), mk(v), mk(up), mk(vp), mk(upp), mk(vpp),
        float(w0), drift, anchor,
    )


def microstate_action(basis: BasisPair, micro: Microstate, constants: Constants) -> ActionSlice:
    """Build the reduced action and all derived fields for one microstate.

    W' comes from the conserved combination rho*W' = hbar*(ad-bc)*wronskian;
    W'' and W''' follow analytically from the basis pair and the ODE itself,
    which keeps the Schwarzian accurate.  The state function is assembled so
    the stationary Hamilton-Jacobi identity holds at machine precision.
    """
    if not basis.grid.contains(micro.q0):
        raise ValueError(f"anchor q0={micro.q0} outside the basis grid")
    m, hbar = constants.m, constants.hbar
    a, b, c, d = micro.a, micro.b, micro.c, micro.d
    u, v = basis.u.values, basis.v.values
    up, vp = basis.up.values, basis.vp.values
    upp, vpp = basis.upp.values, basis.vpp.values

    p = a * u + b * v
    r = c * u + d * v
    pp = a * up + b * vp
    rp = c * up + d * vp
    ppp = a * upp + b * vpp
    rpp = c * upp + d * vpp

    rho = p * p + r * r
    if np.min(rho) <= 0.0:
        raise DegenerateMicrostateError("rho vanished at a node")
    D = micro.det * basis.wronskian
    Wp = hbar * D / rho
    rho_p = 2.0 * (p * pp + r * rp)
    rho_pp = 2.0 * (pp * pp + p * ppp + rp * rp + r * rpp)
    Wpp = -hbar * D * rho_p / rho**2
    Wppp = hbar * D * (2.0 * rho_p**2 / rho**3 - rho_pp / rho**2)

    grid = basis.grid
    Wp_field = SampledField1D(grid, Wp)
    W_field = SampledField1D(
        grid, micro.W0 + cumulative_integral(Wp_field, micro.q0).values
    )

    sw = Wppp / Wp - 1.5 * (Wpp / Wp) ** 2
    Q = (hbar**2 / (4.0 * m)) * sw
    scriptW = -Q - Wp**2 / (2.0 * m)

    mk = lambda arr: SampledField1D(grid, arr)
    return ActionSlice(
        grid, basis.E, W_field, Wp_field, mk(Wpp), mk(Wppp),
        mk(np.sqrt(rho)), mk(rho), mk(Q), mk(scriptW),
    )


def schwarzian(
    f: SampledField1D,
    fp: SampledField1D,
    fpp: SampledField1D,
    fppp: SampledField1D,
) -> SampledField1D:
    """Pointwise {f, q} = f'''/f' - (3/2)(f''/f')^2 from sampled derivatives."""
    zero = np.nonzero(fp.values == 0.0)[0]
    if zero.size:
        raise SingularityError(f"f' vanishes at node {zero[0]}", node=int(zero[0]))
    fpv = fp.values
    vals = fppp.values / fpv - 1.5 * (fpp.values / fpv) ** 2
    return SampledField1D(f.grid, vals)


def quantum_potential_from_amplitude(slc: ActionSlice, constants: Constants) -> SampledField1D:
    """Independent route Q = -(hbar^2/2m) R''/R, with R'' by stencil."""
    Rpp = diff_central(slc.R, 2)
    vals = -(constants.hbar**2 / (2.0 * constants.m)) * Rpp.values / slc.R.values
    return SampledField1D(slc.grid, vals)


def qshje_residual(slc: ActionSlice, constants: Constants) -> np.ndarray:
    """(1/2m) W'^2 + scriptW + Q, pointwise (zero by construction)."""
    return slc.Wp.values**2 / (2.0 * constants.m) + slc.scriptW.values + slc.Q.values


def continuity_residual(slc: ActionSlice) -> float:
    """Max relative drift of rho*W' across the grid."""
    c = slc.rho.values * slc.Wp.values
    c0 = np.median(c)
    return float(np.max(np.abs(c - c0)) / abs(c0))


def verify_scriptW(slc: ActionSlice, potential: Potential) -> ResidualReport:
    """Residuals of scriptW(q) = V(q) - E over the stencil-clean interior."""
    sel = slc.grid.interior()
    q = slc.grid.nodes[sel]
    resid = slc.scriptW.values[sel] - (np.asarray(potential(q), dtype=float) - slc.E)
    return ResidualReport.from_residuals(
        "scriptW_vs_V_minus_E", resid, params={"E": slc.E}
    )


def mobius_apply(micro: Microstate, A: float, B: float, C: float, D: float) -> Microstate:
    """Act on the microstate ratio r/p by the map x -> (A x + B)/(C x + D).

    Composition of two maps equals applying their matrix product.  The
    anchor (W0, q0) is kept.
    """
    if A * D - B * C == 0.0:
        raise ValueError("Möbius map must have A*D - B*C != 0")
    a2 = D * micro.a + C * micro.c
    b2 = D * micro.b + C * micro.d
    c2 = B * micro.a + A * micro.c
    d2 = B * micro.b + A * micro.d
    return Microstate(a2, b2, c2, d2, micro.W0, micro.q0)


def wavefunction(
    slc: ActionSlice,
    A: complex,
    B: complex,
    constants: Constants,
    exponent_mode: str = "standard",
) -> tuple[np.ndarray, float]:
    """Assemble psi from the reduced action and report its Schrödinger residual.

    'paper' mode uses the prefactor (W')^-1 as printed in the source
    construction; 'standard' mode uses |W'|^(-1/2), the polar-decomposition
    normalization.  The residual uses V - E = scriptW and is the max over
    interior nodes of |-(hbar^2/2m) psi'' + (V - E) psi|.
    """
    Wp = slc.Wp.values
    if np.any(Wp == 0.0):
        raise SingularityError("W' vanishes at a node")
    if exponent_mode == "paper":
        pref = 1.0 / Wp
    elif exponent_mode == "standard":
        pref = 1.0 / np.sqrt(np.abs(Wp))
    else:
        raise ValueError(f"exponent_mode must be 'paper' or 'standard', got {exponent_mode!r}")
    phase = slc.W.values / constants.hbar
    psi = pref * (A * np.exp(-1j * phase) + B * np.exp(1j * phase))

    h = slc.grid.h
    psi_pp = uniform_diff(psi.real, h, 2) + 1j * uniform_diff(psi.imag, h, 2)
    resid = (
        -(constants.hbar**2 / (2.0 * constants.m)) * psi_pp + slc.scriptW.values * psi
    )
    sel = slc.grid.interior()
    return psi, float(np.max(np.abs(resid[sel])))


def export_action_slice(slc: ActionSlice, path) -> None:
    """CSV export: one row per node, 17-significant-digit decimals."""
    cols = [
        ("q", slc.grid.nodes),
        ("W", slc.W.values),
        ("Wp", slc.Wp.values),
        ("Wpp", slc.Wpp.values),
        ("R", slc.R.values),
        ("rho", slc.rho.values),
        ("Q", slc.Q.values),
        ("scriptW", slc.scriptW.values),
    ]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(name for name, _ in cols) + "\n")
        for i in range(slc.grid.n):
            fh.write(",".join(f"{arr[i]:.17g}" for _, arr in cols) + "\n")
