"""Derived quantities: loop currents, model deviations, relative phases,
flux scans of the triangle spectrum, and chirality ordering."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dicke import FockSpec, Trajectory, chiral_current_operator, spin_marginal

TWO_PI = 2.0 * np.pi


class TurningPointError(ValueError):
    """Relative phase undefined where one well is (almost) empty."""


class InconsistentStateError(ValueError):
    """Correlator inconsistent with the claimed well populations."""


def wrap_phase(x):
    return (x + np.pi) % TWO_PI - np.pi


def chiral_current(state: np.ndarray, couplings, n_ions: int = 3,
                   fock: FockSpec = None) -> float:
    """Loop current ``i <sum_loop J_ij sigma_i^+ sigma_j^- - h.c.>``.

    ``state`` may be a spin state or a full spin-phonon state (pass ``fock``
    for the latter).  The expectation is real; the imaginary residue is
    asserted below 1e-12 and discarded.
    """
    op = chiral_current_operator(couplings)
    if fock is not None:
        rho = spin_marginal(state, n_ions, fock)
        val = np.trace(rho @ op)
    else:
        val = np.vdot(state, op @ state)
    if abs(val.imag) > 1e-12 * max(1.0, abs(val.real)):
        raise AssertionError(f"current has imaginary residue {val.imag:.2e}")
    return float(val.real)


def trajectory_deviation(a: Trajectory, b: Trajectory) -> tuple:
    """Stroboscopic model deviation ``sum_i (sz_i^a - sz_i^b)^2``.

    Returns ``(times, deviation)`` on the common stroboscopic grid; the two
    trajectories must have been sampled on identical stroboscopic times.
    """
    ia, ib = a.strobe_rows(), b.strobe_rows()
    ta, tb = a.times[ia], b.times[ib]
    if len(ta) != len(tb) or (len(ta) and np.max(np.abs(ta - tb)) > 1e-9 * ta[-1]):
        raise ValueError("stroboscopic grids do not match")
    dev = np.sum((a.sz[ia] - b.sz[ib]) ** 2, axis=1)
    return ta, dev


def phase_from_correlations(sx1x3: float, sz1: float, eps: float = 0.02) -> float:
    """|relative phase| of the two-well state from one pair correlator.

    ``|dphi| = arccos(sx1x3 / (2 |c_L| |c_R|))`` with ``|c_L| =
    sqrt((1 + sz1)/2)``.  Near the oscillation turning points the product
    ``|c_L||c_R|`` vanishes and the phase is undefined.
    """
    cl = np.sqrt(max(0.0, (1.0 + sz1) / 2.0))
    cr = np.sqrt(max(0.0, (1.0 - sz1) / 2.0))
    w = cl * cr
    if w <= eps:
        raise TurningPointError(f"|c_L||c_R| = {w:.4f} <= {eps}")
    arg = sx1x3 / (2.0 * w)
    if abs(arg) > 1.0 + 1e-9:
        raise InconsistentStateError(
            f"correlator / (2 |c_L||c_R|) = {arg:.6f} outside [-1, 1]"
        )
    return float(np.arccos(np.clip(arg, -1.0, 1.0)))


def phase_trajectory(traj: Trajectory, route: str, eps: float = 0.02):
    """|dphi|(t) of a double-well run by one measurement route.

    Routes: ``wavefunction`` (drive-frame phase of the left-right coherence)
    and ``correlator`` (pair correlator plus single-ion polarization).
    Returns ``(times, abs_dphi, valid)`` with invalid turning-point samples
    flagged False and set to NaN.
    """
    if traj.n_ions != 3 or traj.sx1x3 is None:
        raise ValueError("phase extraction needs a three-ion trajectory")
    n = len(traj.times)
    out = np.full(n, np.nan)
    valid = np.zeros(n, dtype=bool)
    weight = np.sqrt(np.clip(traj.pops[:, 0] * (1 - traj.pops[:, 0]), 0, None))
    for k in range(n):
        if weight[k] <= eps:
            continue
        if route == "wavefunction":
            coh = traj.rl_coherence[k]
            if abs(coh) < 1e-300:
                continue
            out[k] = abs(wrap_phase(np.angle(coh)))
            valid[k] = True
        elif route == "correlator":
            try:
                out[k] = phase_from_correlations(
                    traj.sx1x3[k], traj.sz[k, 0], eps=eps
                )
                valid[k] = True
            except (TurningPointError, InconsistentStateError):
                continue
        else:
            raise ValueError("route must be 'wavefunction' or 'correlator'")
    return traj.times, out, valid


def signed_phase_trajectory(traj: Trajectory):
    """Signed drive-frame phase of the left-right coherence (wavefunction
    route); NaN where either well is empty."""
    coh = traj.rl_coherence
    out = np.where(np.abs(coh) > 1e-300, np.angle(coh), np.nan)
    return traj.times, out


def plateau_levels(times, values, weight, threshold=0.15, split_level=0.4):
    """Plateau levels of a phase trace that jumps at oscillation nodes.

    The trace is segmented at local minima of ``weight`` (the nodes, where
    ``|c_L||c_R|`` dips); within each segment only samples with weight above
    ``threshold`` count, and the reported level is the value at the flattest
    point of the segment, where the phase is stationary.  Returns a list of
    ``(t_mid, level)`` pairs.
    """
    times = np.asarray(times)
    values = np.asarray(values)
    weight = np.asarray(weight)
    cuts = [
        k
        for k in range(1, len(times) - 1)
        if weight[k] < split_level
        and weight[k] <= weight[k - 1]
        and weight[k] < weight[k + 1]
    ]
    bounds = []
    start = 0
    for c in cuts:
        bounds.append((start, c))
        start = c + 1
    bounds.append((start, len(times) - 1))
    out = []
    for a, b in bounds:
        sel = [
            k
            for k in range(a, b + 1)
            if weight[k] > threshold and np.isfinite(values[k])
        ]
        if len(sel) < 5:
            continue
        v = np.unwrap(values[np.array(sel)])
        slopes = np.abs(np.gradient(v))
        k0 = sel[int(np.argmin(slopes))]
        out.append((float(times[k0]), float(values[k0])))
    return out


@dataclass(frozen=True)
class FluxScan:
    """Single-excitation spectrum and per-eigenstate loop currents of the
    uniform triangle as a function of the loop flux."""

    flux: np.ndarray
    energies: np.ndarray  # (n_phi, 3), ascending per row
    currents: np.ndarray  # (n_phi, 3), matched to the energy order


def uniform_triangle(j_mag: float, phi: float) -> np.ndarray:
    """3x3 hopping matrix with |J| = j_mag and loop flux phi, spread
    symmetrically over the three bonds (smooth in phi)."""
    z = j_mag * np.exp(1j * phi / 3.0)
    h = np.zeros((3, 3), dtype=np.complex128)
    for (i, j) in ((0, 1), (1, 2), (2, 0)):
        h[i, j] = z
        h[j, i] = np.conj(z)
    return h


def flux_scan(j_mag: float, flux_grid) -> FluxScan:
    """Eigenenergies and eigenstate loop currents across the flux grid."""
    flux_grid = np.asarray(flux_grid, dtype=float)
    energies = np.zeros((len(flux_grid), 3))
    currents = np.zeros((len(flux_grid), 3))
    for k, phi in enumerate(flux_grid):
        h = uniform_triangle(j_mag, phi)
        lam, v = np.linalg.eigh(h)
        iop = np.zeros((3, 3), dtype=np.complex128)
        for (i, j) in ((0, 1), (1, 2), (2, 0)):
            iop += 1j * (h[i, j] * np.outer(_e(i), _e(j)) - np.conj(h[i, j]) * np.outer(_e(j), _e(i)))
        energies[k] = lam
        currents[k] = [float(np.vdot(v[:, a], iop @ v[:, a]).real) for a in range(3)]
    return FluxScan(flux=flux_grid, energies=energies, currents=currents)


def _e(i):
    v = np.zeros(3)
    v[i] = 1.0
    return v


def degenerate_cluster_currents(energies, currents, rel_tol=1e-8):
    """Sum currents within degenerate energy clusters (one row)."""
    order = np.argsort(energies)
    e, c = np.asarray(energies)[order], np.asarray(currents)[order]
    scale = max(np.max(np.abs(e)), 1e-300)
    sums = []
    acc, eref = c[0], e[0]
    for k in range(1, len(e)):
        if abs(e[k] - eref) < rel_tol * scale:
            acc += c[k]
        else:
            sums.append(acc)
            acc, eref = c[k], e[k]
    sums.append(acc)
    return np.array(sums)


@dataclass(frozen=True)
class ChiralityReport:
    """Population-ordering witness of the loop current direction."""

    t_peak_3: float | None
    t_peak_2: float | None
    chirality: str  # "counter-clockwise" | "clockwise" | "indeterminate"
    trs_asymmetry: float | None


def chirality_witness(traj: Trajectory, revival_time=None, min_contrast=1e-3):
    """Direction of the population flow from a single excitation on ion 1.

    Counter-clockwise means the excitation reaches ion 3 before ion 2
    (peak time of pop_3 earlier).  When ``revival_time`` is given, peaks are
    searched within it, and the time-reversal check compares populations at
    ``t`` and ``revival_time - t`` (symmetric for zero flux).
    """
    t = traj.times
    window = revival_time if revival_time is not None else t[-1]
    sel = t <= window * (1 + 1e-9)
    p2, p3 = traj.pops[sel, 1], traj.pops[sel, 2]
    ts = t[sel]
    if (p2.max() - p2.min() < min_contrast) and (p3.max() - p3.min() < min_contrast):
        return ChiralityReport(None, None, "indeterminate", None)
    t2 = float(ts[np.argmax(p2)])
    t3 = float(ts[np.argmax(p3)])
    if abs(t3 - t2) < 1e-6 * window:
        chir = "indeterminate"
    else:
        chir = "counter-clockwise" if t3 < t2 else "clockwise"
    trs = None
    if revival_time is not None:
        mirrored = np.clip(revival_time - ts, ts[0], ts[-1])
        asym = 0.0
        for i in range(traj.pops.shape[1]):
            pm = np.interp(mirrored, ts, traj.pops[sel, i])
            asym = max(asym, float(np.max(np.abs(traj.pops[sel, i] - pm))))
        trs = asym
    return ChiralityReport(t3, t2, chir, trs)


def phonon_number(state: np.ndarray, n_ions: int, fock: FockSpec) -> float:
    """Total phonon expectation ``sum_m <a_m^+ a_m>`` of a full state."""
    from .dicke import phonon_number_diagonal

    A = state.reshape(2**n_ions, fock.n_max**n_ions)
    probs = np.einsum("sp,sp->p", A.conj(), A).real
    return float(probs @ phonon_number_diagonal(n_ions, fock.n_max))


def revival_time(j_triangle: float) -> float:
    """Return period of the half-integer-flux triangle: the one-excitation
    spectrum is {+s, 0, -s} with s = sqrt(3) |J'|, so phases realign at
    ``2 pi / s``."""
    return TWO_PI / (np.sqrt(3.0) * j_triangle)


def state_fidelity_to_excitation(traj: Trajectory, ion: int = 0) -> np.ndarray:
    """Population of the initial single-excitation configuration, which for
    a basis-state preparation equals the return fidelity."""
    return traj.pops[:, ion]
