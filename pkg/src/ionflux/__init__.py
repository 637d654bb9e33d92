"""Floquet-engineered chiral spin dynamics of small trapped-ion chains.

From trap parameters to coupling matrices, from piecewise-constant shaking
protocols to effective flux Hamiltonians, and from spin-only models to the
full spin-phonon dynamics with a Krylov propagator.
"""

__version__ = "0.1.0"

from .chain import (  # noqa: F401
    CouplingMatrix,
    ModeData,
    TrapSpec,
    chain_modes,
    equilibrium_positions,
    lamb_dicke,
    reference_trap,
    spin_spin_couplings,
    transverse_modes,
)
from .config import RunConfig, prepare  # noqa: F401
from .dicke import (  # noqa: F401
    EvolutionPlan,
    FockSpec,
    Trajectory,
    build_dicke_hamiltonian,
    evolve_dicke,
    evolve_spin,
    initial_full_state,
)
from .floquet import (  # noqa: F401
    EffectiveCouplings,
    averaged_couplings,
    coupling_discrepancy,
    exact_effective_couplings,
    exact_effective_hamiltonian,
)
from .krylov import USING_COMPILED_KERNEL, krylov_expm_step  # noqa: F401
from .observables import (  # noqa: F401
    chiral_current,
    chirality_witness,
    flux_scan,
    phase_from_correlations,
    phonon_number,
    trajectory_deviation,
)
from .protocols import (  # noqa: F401
    DriveProtocol,
    chi_profile,
    make_double_well_protocol,
    make_flux_protocol,
    rwa_validity_check,
)
