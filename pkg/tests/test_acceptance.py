"""Acceptance criteria.

Each test prints one ``criterion NN: PASS/FAIL`` line (run with ``-s`` to
see them live) and asserts the stated tolerance.  The heavy spin-phonon
runs come from the session fixtures in ``conftest.py``.
"""
import time

import numpy as np
from scipy.linalg import expm
from scipy.stats import linregress

from ionflux.chain import chain_modes, reference_trap, spin_spin_couplings
from ionflux.dicke import (
    EvolutionPlan,
    FockSpec,
    evolve_dicke,
    evolve_spin,
    initial_full_state,
)
from ionflux.floquet import averaged_couplings, coupling_discrepancy
from ionflux.krylov import krylov_expm_step
from ionflux.observables import (
    chirality_witness,
    degenerate_cluster_currents,
    flux_scan,
    phase_trajectory,
    plateau_levels,
    trajectory_deviation,
)
from ionflux.protocols import (
    DriveProtocol,
    Segment,
    make_flux_protocol,
    phase_average,
)
from ionflux.spinops import single_excitation_state

TWO_PI = 2 * np.pi


def report(num, ok, detail):
    print(f"criterion {num:02d}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {num}: {detail}"


def ratio_two_couplings(J):
    """Coupling matrix with the nearest-neighbor bonds exactly twice the
    outer bond, at the real chain's scale."""
    j12 = J.values[0, 1]
    ideal = np.zeros((3, 3))
    ideal[0, 1] = ideal[1, 0] = j12
    ideal[1, 2] = ideal[2, 1] = j12
    ideal[0, 2] = ideal[2, 0] = j12 / 2
    return ideal


def fit_rabi_period(times, pop, t_guess):
    """Least-squares cosine-squared period on stroboscopic samples."""
    candidates = np.linspace(0.8 * t_guess, 1.3 * t_guess, 3001)
    best, best_T = np.inf, np.nan
    for T in candidates:
        model = np.cos(np.pi * times / T) ** 2
        A = np.column_stack([model, np.ones_like(times)])
        coef, *_ = np.linalg.lstsq(A, pop, rcond=None)
        r = float(np.sum((A @ coef - pop) ** 2))
        if r < best:
            best, best_T = r, T
    return best_T


def test_criterion_01_coupling_reconstruction():
    t0 = time.perf_counter()
    spec = reference_trap()
    J = spin_spin_couplings(chain_modes(spec), spec)
    elapsed = time.perf_counter() - t0
    jrms_hz = J.j_rms / TWO_PI
    ratio = J.values[0, 1] / J.values[0, 2]
    ok = (
        abs(jrms_hz - 270.0) / 270.0 < 0.10
        and abs(ratio - 2.0) / 2.0 < 0.15
        and elapsed < 1.0
    )
    report(1, ok, f"j_rms = {jrms_hz:.1f} Hz, J12/J13 = {ratio:.3f}, "
                  f"{elapsed * 1e3:.0f} ms")


def test_criterion_02_drive_rules():
    mu0 = TWO_PI * 5000.0
    delta = np.pi / mu0
    # rule 1: full-interval detuning suppresses exactly
    worst_suppression = 0.0
    for m in (1, 2, 3):
        p = DriveProtocol(delta=delta, mu0=mu0, b0=0.0,
                          segments=(Segment(delta, (m, 0)),))
        worst_suppression = max(worst_suppression, abs(phase_average(p, 0, 1)))
    # rule 2: fractional shift gives J/2 at phase 2 pi m / q
    worst_mag, worst_phase = 0.0, 0.0
    for q, m in ((4, 1), (3, 1), (3, 2), (8, 3)):
        tau = delta / q
        p = DriveProtocol(
            delta=delta, mu0=mu0, b0=0.0,
            segments=(
                Segment(tau, (m, 0), fractional=True),
                Segment(delta, (0, 0)),
                Segment(delta - tau, (m, 0), fractional=True),
            ),
        )
        avg = phase_average(p, 0, 1)
        worst_mag = max(worst_mag, abs(abs(avg) - 0.5))
        dphi = (np.angle(avg) - TWO_PI * m / q + np.pi) % TWO_PI - np.pi
        worst_phase = max(worst_phase, abs(dphi))
    ok = worst_suppression < 1e-14 and worst_mag < 1e-12 and worst_phase < 1e-12
    report(2, ok, f"suppression residue {worst_suppression:.1e}, "
                  f"rule-2 errors {worst_mag:.1e} / {worst_phase:.1e} rad")


def test_criterion_03_floquet_scaling(ref):
    t0 = time.perf_counter()
    jr = ref["j_rms"]

    def builder(mu0):
        d = np.pi / mu0
        return make_flux_protocol(d / 4, d, mu0, jr)

    grid = (5.0, 10.0, 20.0, 40.0, 80.0)
    reps = coupling_discrepancy(ref["J"], builder, [r * jr for r in grid], jr)
    amp = np.array([r.amp_error for r in reps])
    pha = np.array([r.phase_error for r in reps])
    s_amp = linregress(np.log(grid), np.log(amp)).slope
    s_pha = linregress(np.log(grid), np.log(pha)).slope
    elapsed = time.perf_counter() - t0
    ok = (
        abs(s_amp + 1.0) <= 0.15
        and abs(s_pha + 1.0) <= 0.15
        and amp[2] < 0.1
        and pha[2] < 0.1
        and elapsed < 10.0
    )
    report(3, ok, f"slopes ({s_amp:.3f}, {s_pha:.3f}), at 20 J_rms "
                  f"({amp[2]:.4f}, {pha[2]:.4f}), {elapsed:.1f} s")


def test_criterion_04_equalization(ref):
    jr = ref["j_rms"]
    mu0 = 20 * jr
    delta = np.pi / mu0
    p = make_flux_protocol(delta / 4, delta, mu0, jr)
    eff = averaged_couplings(ratio_two_couplings(ref["J"]), p)
    m12, m13 = abs(eff.matrix[0, 1]), abs(eff.matrix[0, 2])
    rel = abs(m12 - m13) / m13
    ok = rel < 0.1
    report(4, ok, f"||J'_12| - |J'_13|| / |J'_13| = {rel:.2e} "
                  f"(input ratio 2)")


def test_criterion_05_chirality_and_reversal(ref, flux_runs):
    ccw = flux_runs[0.25]
    cw = flux_runs[0.75]
    rep_ccw = chirality_witness(ccw["dicke"], revival_time=ccw["t_rev"])
    rep_cw = chirality_witness(cw["dicke"], revival_time=cw["t_rev"])
    # zero offset: first-order averaged model from the exact-ratio-2 input,
    # whose equalized triangle makes ions 2 and 3 exactly interchangeable
    p0 = flux_runs[0.0]["protocol"]
    traj0 = evolve_spin(
        single_excitation_state(0, 3), "xx_avg",
        ratio_two_couplings(ref["J"]), p0,
        1.05 * flux_runs[0.0]["t_rev"],
        plan=EvolutionPlan(n_samples=420),
    )
    sym_gap = float(np.max(np.abs(traj0.pops[:, 1] - traj0.pops[:, 2])))
    ok = (
        rep_ccw.chirality == "counter-clockwise"
        and rep_cw.chirality == "clockwise"
        and sym_gap < 1e-6
    )
    report(5, ok, f"+pi/2: {rep_ccw.chirality} (t3*={rep_ccw.t_peak_3*1e3:.2f}"
                  f" < t2*={rep_ccw.t_peak_2*1e3:.2f} ms), "
                  f"-pi/2: {rep_cw.chirality}, zero-flux |pop2-pop3| = "
                  f"{sym_gap:.1e}")


def test_criterion_06_near_revival(ref, flux_runs):
    run = flux_runs[0.25]
    t_rev = run["t_rev"]
    traj = evolve_spin(
        single_excitation_state(0, 3), "xx", ref["J"], run["protocol"],
        1.02 * t_rev, plan=EvolutionPlan(n_samples=200), extra_times=(t_rev,),
    )
    k = int(np.argmin(np.abs(traj.times - t_rev)))
    fid = traj.pops[k, 0]
    ok = fid > 0.9
    report(6, ok, f"return fidelity {fid:.4f} at T' = {t_rev*1e3:.2f} ms")


def test_criterion_07_flux_protected_fidelity(flux_runs):
    devs = {}
    for tau in (0.0, 0.25):
        run = flux_runs[tau]
        ts, dev = trajectory_deviation(run["ising"], run["dicke"])
        devs[tau] = dev[-1]
    ok = devs[0.0] > devs[0.25]
    report(7, ok, f"final stroboscopic deviation: zero flux {devs[0.0]:.4f} "
                  f"> half-pi flux {devs[0.25]:.4f}")


def test_criterion_08_equilibrium_currents():
    grid = np.linspace(-np.pi, np.pi, 241)
    scan = flux_scan(1.0, grid)
    worst_integer = 0.0
    for phi in (0.0, np.pi, -np.pi):
        k = int(np.argmin(np.abs(grid - phi)))
        sums = degenerate_cluster_currents(scan.energies[k], scan.currents[k])
        worst_integer = max(worst_integer, float(np.max(np.abs(sums))))
    away = [
        float(np.min(np.abs(scan.currents[k])))
        for k, phi in enumerate(grid)
        if min(abs(phi), abs(abs(phi) - np.pi)) > 0.05
    ]
    antis = 0.0
    for k, phi in enumerate(grid):
        km = int(np.argmin(np.abs(grid + phi)))
        antis = max(antis, float(np.max(np.abs(
            scan.currents[k] + scan.currents[km]
        ))))
    ok = worst_integer < 1e-10 and min(away) > 0 and antis < 1e-10
    report(8, ok, f"integer-flux residue {worst_integer:.1e}, "
                  f"min off-integer current {min(away):.2e}, "
                  f"antisymmetry residue {antis:.1e}")


def test_criterion_09_double_well(dw_run):
    t_osc = dw_run["t_osc_exact"]
    # the center single-excitation configuration stays frozen in the full
    # model (the sigma_z marginal additionally carries the mu0-independent
    # virtual-dressing background)
    center_max = float(np.max(dw_run["dicke"].config_pops[:, 1]))
    # oscillation period against pi / |J'_13| of the stroboscopic couplings
    rows = dw_run["ising"].strobe_rows()
    T_fit = fit_rabi_period(
        dw_run["ising"].times[rows], dw_run["ising"].pops[rows, 0], t_osc
    )
    period_err = abs(T_fit - t_osc) / t_osc
    # phase plateaus in the three measurement routes, read stroboscopically
    # (between the kicks the drive-frame phase carries micromotion)
    expect = (5 * np.pi / 6, np.pi / 6)
    route_errs = {}
    routes = (
        ("ising wavefunction", dw_run["ising"], "wavefunction"),
        ("full-model wavefunction", dw_run["dicke"], "wavefunction"),
        ("full-model correlator", dw_run["dicke"], "correlator"),
    )
    for name, traj, route in routes:
        ts, dphi, valid = phase_trajectory(traj, route)
        sel = traj.strobe_rows()
        weight = np.sqrt(np.clip(
            traj.pops[sel, 0] * (1 - traj.pops[sel, 0]), 0, None))
        levels = plateau_levels(ts[sel], dphi[sel], weight)
        errs = [
            min(abs(v - expect[0]), abs(v - expect[1])) for _, v in levels[:2]
        ]
        route_errs[name] = max(errs) if len(errs) == 2 else np.inf
    ok = (
        center_max < 0.02
        and period_err < 0.05
        and all(e < 0.1 for e in route_errs.values())
    )
    report(9, ok, f"center configuration occupation {center_max:.4f}, "
                  f"period error {period_err:.3f}, plateau errors (rad) "
                  + ", ".join(f"{k}: {v:.3f}" for k, v in route_errs.items()))


def test_criterion_10_numerics(ref, flux_runs):
    # norm drift on the production runs
    drift = max(
        float(np.max(np.abs(run["dicke"].norm - 1.0)))
        for run in flux_runs.values()
    )
    # Krylov step against a dense exponential on dimension 200
    rng = np.random.default_rng(1234)
    A = rng.normal(size=(200, 200)) + 1j * rng.normal(size=(200, 200))
    H = (A + A.conj().T) / 2
    v = rng.normal(size=200) + 1j * rng.normal(size=200)
    v /= np.linalg.norm(v)
    kry_err = float(np.max(np.abs(
        krylov_expm_step(H, v, 0.4, tol=1e-10, m_max=60)
        - expm(-1j * H * 0.4) @ v
    )))
    # lab vs rotating frame over five beats of the mode detuning
    spec, modes = ref["spec"], ref["modes"]
    jr = ref["j_rms"]
    mu0 = 20 * jr
    p = make_flux_protocol(0.25 * np.pi / mu0, np.pi / mu0, mu0, jr)
    window = 5 * TWO_PI / spec.delta_com
    fock = FockSpec(n_max=3)
    full0 = initial_full_state(3, fock)
    t_rwa = evolve_dicke(full0, EvolutionPlan(frame="rwa", n_samples=40),
                         p, modes, spec, fock, window)
    t_lab = evolve_dicke(full0, EvolutionPlan(frame="lab", n_samples=40),
                         p, modes, spec, fock, window)
    frame_gap = float(np.max(np.abs(t_rwa.sz - t_lab.sz)))
    # Fock truncation convergence
    outs = {}
    for n_max in (4, 6):
        fk = FockSpec(n_max=n_max)
        outs[n_max] = evolve_dicke(
            initial_full_state(3, fk),
            EvolutionPlan(frame="rwa", n_samples=40), p, modes, spec, fk,
            2.0 / jr,
        )
    trunc_gap = float(np.max(np.abs(outs[4].sz - outs[6].sz)))
    ok = (
        drift < 1e-8 and kry_err < 1e-8 and frame_gap < 2e-2
        and trunc_gap < 1e-3
    )
    report(10, ok, f"norm drift {drift:.1e}, krylov error {kry_err:.1e}, "
                   f"frame gap {frame_gap:.1e}, truncation gap {trunc_gap:.1e}")
