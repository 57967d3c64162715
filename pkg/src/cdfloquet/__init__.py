"""Counterdiabatic driving toolkit: variational gauge potentials as nested
commutator series, Floquet-engineered drives matched through Bessel series,
and direct time evolution of spin systems to verify both."""

from .agp import (
    AgpGrid,
    GappedSpec,
    ResponseMoments,
    VariationalCoefficients,
    action_value,
    build_agp,
    exact_agp,
    gapped_alpha,
    local_basis_agp,
    offdiagonal_action,
    prefactor_curve,
    response_moments_commutator,
    response_moments_spectral,
    solve_alpha,
    variational_grids,
)
from .dynamics import (
    CD,
    FE,
    UA,
    GroundCache,
    Schedule,
    Trajectory,
    absorbed_energy,
    annealing_schedule,
    evolve,
    fidelity,
    schedule_eval,
    spin_profile,
)
from .floquet import (
    FloquetDrive,
    bessel_j,
    drive_hamiltonian,
    effective_floquet_elements,
    floquet_log_hamiltonian,
    make_drive,
    match_harmonics,
    match_harmonics_compensated,
    stroboscopic_propagator,
)
from .models import (
    HamiltonianFamily,
    TrapSpec,
    ising_uniform,
    three_level,
    trap_ising,
    two_qubit_xxzz,
)
from .operators import (
    PauliKernel,
    PauliString,
    PauliSum,
    SpectralData,
    apply,
    commutator,
    diagonalize,
    hs_inner,
    multiply,
    nested_tower,
    to_matrix,
)

__all__ = [
    "AgpGrid",
    "CD",
    "FE",
    "FloquetDrive",
    "GappedSpec",
    "GroundCache",
    "HamiltonianFamily",
    "PauliKernel",
    "PauliString",
    "PauliSum",
    "ResponseMoments",
    "Schedule",
    "SpectralData",
    "Trajectory",
    "TrapSpec",
    "UA",
    "VariationalCoefficients",
    "absorbed_energy",
    "action_value",
    "annealing_schedule",
    "apply",
    "bessel_j",
    "build_agp",
    "commutator",
    "diagonalize",
    "drive_hamiltonian",
    "effective_floquet_elements",
    "evolve",
    "exact_agp",
    "fidelity",
    "floquet_log_hamiltonian",
    "gapped_alpha",
    "hs_inner",
    "ising_uniform",
    "local_basis_agp",
    "make_drive",
    "match_harmonics",
    "match_harmonics_compensated",
    "multiply",
    "nested_tower",
    "offdiagonal_action",
    "prefactor_curve",
    "response_moments_commutator",
    "response_moments_spectral",
    "schedule_eval",
    "solve_alpha",
    "spin_profile",
    "stroboscopic_propagator",
    "three_level",
    "to_matrix",
    "trap_ising",
    "two_qubit_xxzz",
    "variational_grids",
]

__version__ = "0.1.0"
