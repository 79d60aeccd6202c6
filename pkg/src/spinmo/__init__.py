"""spinmo: multilevel-oscillation control for antiferromagnetic spin-1 condensates.

Simulates the generation of many-body singlet and twin-Fock states by
combining slow quadratic-Zeeman ramps with stepwise constant-q holds
("multilevel oscillations"), optimizes the hold schedule, and quantifies
robustness against field noise, atom-number fluctuations and atom loss.
"""

__version__ = "0.1.0"

from .basis import (
    FullBasis,
    PairBasis,
    SectorBasis,
    StateVector,
    build_full_basis,
    build_pair_basis,
    polar_state,
    twin_fock_state,
)
from .operators import (
    ExtendedParams,
    PhysicsParams,
    TriMatrix,
    hamiltonian_pair,
    hamiltonian_sector,
    l2_pair,
    l2_sector,
    lx_full,
    ly_full,
    lz_full,
    oscillator_hamiltonian,
)
from .spectra import (
    EigenSystem,
    adiabatic_beta,
    critical_q_estimate,
    eigensolve_tridiagonal,
    find_critical_q,
    gap,
    perturbative_gap,
)
from .propagate import evolve_constant, evolve_ramp, evolve_rotating
from .observables import (
    ObservableRecord,
    conversion_efficiency,
    fidelity_singlet,
    fidelity_twinfock,
    occupied_levels,
    record_for,
    reference_eigensystem,
    singlet_amplitudes,
    spin_moments,
    squeezing_xi2,
)
from .schedule import (
    Hold,
    LinearSweep,
    ParabolicRamp,
    Schedule,
    landau_zener,
    mirror_schedule,
    reference_ramp,
    run_schedule,
)

__all__ = [name for name in dir() if not name.startswith("_")]
