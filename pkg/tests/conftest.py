"""Shared fixtures.

The heavy spin-phonon runs are session-scoped and reused across the
invariant tests and the acceptance suite: four flux-protocol runs at
different drive offsets plus one double-well run.
"""
import numpy as np
import pytest

from ionflux.chain import chain_modes, reference_trap, spin_spin_couplings
from ionflux.dicke import (
    EvolutionPlan,
    FockSpec,
    evolve_dicke,
    evolve_spin,
    initial_full_state,
)
from ionflux.floquet import averaged_couplings, exact_effective_couplings
from ionflux.observables import revival_time
from ionflux.protocols import make_double_well_protocol, make_flux_protocol
from ionflux.spinops import single_excitation_state


@pytest.fixture(scope="session")
def ref():
    """Reference chain: trap, modes, couplings."""
    spec = reference_trap()
    modes = chain_modes(spec)
    J = spin_spin_couplings(modes, spec)
    return {"spec": spec, "modes": modes, "J": J, "j_rms": J.j_rms}


def _flux_protocol(ref, tau_frac, mu0_over=20.0, b0_over=1.0):
    mu0 = mu0_over * ref["j_rms"]
    delta = np.pi / mu0
    return make_flux_protocol(tau_frac * delta, delta, mu0, b0_over * ref["j_rms"])


@pytest.fixture(scope="session")
def flux_runs(ref):
    """Spin-phonon + spin-model runs of the flux protocol across offsets.

    Keys are tau/delta fractions; each entry carries matching 'dicke' and
    'ising' trajectories on one grid (stroboscopic times included), plus the
    averaged couplings and the estimated return time of the excitation.
    """
    fock = FockSpec(n_max=4)
    out = {}
    for tau_frac in (0.25, 0.75, 0.0, 1.0 / 3.0):
        proto = _flux_protocol(ref, tau_frac)
        javg = averaged_couplings(ref["J"], proto)
        jtri = float(np.mean(np.abs(javg.matrix[np.triu_indices(3, 1)])))
        t_rev = revival_time(jtri)
        window = 1.05 * t_rev
        plan = EvolutionPlan(frame="rwa", n_samples=420)
        full0 = initial_full_state(3, fock)
        traj_d = evolve_dicke(
            full0, plan, proto, ref["modes"], ref["spec"], fock, window,
            couplings_for_current=javg,
        )
        traj_i = evolve_spin(
            single_excitation_state(0, 3), "ising", ref["J"], proto, window,
            plan=plan, couplings_for_current=javg,
        )
        out[tau_frac] = {
            "protocol": proto,
            "avg": javg,
            "t_rev": t_rev,
            "dicke": traj_d,
            "ising": traj_i,
            "fock": fock,
        }
    return out


@pytest.fixture(scope="session")
def dw_run(ref):
    """Double-well run (tau = delta/3) with Ising and spin-phonon tiers."""
    mu0 = 12.0 * ref["j_rms"]
    delta = np.pi / mu0
    proto = make_double_well_protocol(delta / 3.0, delta, mu0, ref["j_rms"])
    javg = averaged_couplings(ref["J"], proto)
    jex = exact_effective_couplings(ref["J"], proto)
    t_osc_avg = np.pi / abs(javg.matrix[0, 2])
    t_osc_exact = np.pi / abs(jex.matrix[0, 2])
    window = 1.25 * t_osc_exact
    fock = FockSpec(n_max=4)
    plan = EvolutionPlan(frame="rwa", n_samples=500)
    traj_d = evolve_dicke(
        initial_full_state(3, fock), plan, proto, ref["modes"], ref["spec"],
        fock, window, couplings_for_current=javg,
    )
    traj_i = evolve_spin(
        single_excitation_state(0, 3), "ising", ref["J"], proto, window,
        plan=plan, couplings_for_current=javg,
    )
    return {
        "protocol": proto,
        "avg": javg,
        "exact": jex,
        "t_osc_avg": t_osc_avg,
        "t_osc_exact": t_osc_exact,
        "window": window,
        "dicke": traj_d,
        "ising": traj_i,
        "fock": fock,
    }
