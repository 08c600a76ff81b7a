"""Trajectory-representation stationary quantum mechanics, numerically.

1-D reduced actions with full Möbius freedom, Schwarzian quantum potential,
Floydian times and quantum mass, plus the 3-D Madelung/spin construction,
with verification suites for the identities relating them.
"""

from .numerics import Grid1D, SampledField1D, diff_central, integrate, invert_monotone, param_derivative
from .potentials import (
    FreePotential,
    HarmonicPotential,
    LinearPotential,
    Potential,
    SquareWellPotential,
    TabulatedPotential,
    make_potential,
)
from .qshje import (
    ActionSlice,
    BasisPair,
    Constants,
    Microstate,
    microstate_action,
    mobius_apply,
    schwarzian,
    solve_basis,
    verify_scriptW,
    wavefunction,
)
from .spin3d import (
    FieldScene,
    Grid3D,
    brute_force_spin_scan,
    current_decomposition,
    current_vs_trajectory_report,
    example_4m_build,
    example_4m_family,
    plane_wave_family,
    quantum_potential_3d,
    solve_spin,
    solve_spin_field,
    speed_identity,
    stationary_residual,
    time_field_3d,
)
from .floyd import (
    EnergyDerivatives,
    GaussianPacket,
    Trajectory,
    ehrenfest_check,
    energy_derivatives,
    floyd_time,
    identity_WpWpE,
    legendre_check,
    trajectory_at,
    uncertainty_report,
)

__version__ = "0.1.0"
