"""Time evolution engines.

Two tiers of dynamics share one sampling pipeline:

* spin-only models (Ising with time-dependent fields, driven XX, averaged
  XX, and the exact stroboscopic generator) evolve by exact per-segment
  eigendecomposition, since every segment Hamiltonian is constant;
* the full spin-phonon model evolves by Krylov exponential steps on a
  structured sparse generator, in the lab frame of the sine-driven coupling
  or in the beat-note rotating frame where the fast carrier is removed.

States live on ``spin (x) phonons`` with the spin index major and mode 0 the
most significant phonon digit.  All generators are in angular-frequency
units, times in seconds.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh

from .chain import CouplingMatrix, ModeData, TrapSpec
from .floquet import averaged_couplings, exact_effective_hamiltonian
from .krylov import lanczos_apply
from .protocols import DriveProtocol, chi_profile
from .spinops import (
    build_field,
    build_ising,
    build_xx,
    excitation_index,
    sigma_x,
    sz_diagonal,
)

TWO_PI = 2.0 * np.pi


class DimensionCapError(ValueError):
    pass


class NormDriftError(RuntimeError):
    pass


@dataclass(frozen=True)
class FockSpec:
    """Per-mode Fock truncation: occupations 0 .. n_max - 1."""

    n_max: int = 4
    cap: int = 2**21

    def __post_init__(self):
        if self.n_max < 2:
            raise ValueError("n_max must be >= 2")

    def dimension(self, n_ions: int) -> int:
        dim = 2**n_ions * self.n_max**n_ions
        if dim > self.cap:
            suggested = int(np.floor((self.cap / 2**n_ions) ** (1.0 / n_ions)))
            raise DimensionCapError(
                f"full dimension {dim} exceeds cap {self.cap}; "
                f"largest feasible n_max is {suggested}"
            )
        return dim


@dataclass(frozen=True)
class EvolutionPlan:
    """Numerical controls for a propagation run.

    ``oversampling`` fixes the step against the fastest retained frequency
    (the beat note in the lab frame, the largest mode detuning in the
    rotating frame); the Krylov step then enforces ``krylov_tol`` per step,
    splitting when the subspace cap is hit.
    """

    frame: str = "rwa"  # "rwa" (beat-note rotating) | "lab"
    oversampling: int = 20
    krylov_dim: int = 30
    krylov_tol: float = 1e-9
    n_samples: int = 600
    norm_guard: float = 1e-6

    def __post_init__(self):
        if self.frame not in ("rwa", "lab"):
            raise ValueError("frame must be 'rwa' or 'lab'")
        if self.oversampling < 20:
            raise ValueError("oversampling must be >= 20")


@dataclass
class Trajectory:
    """Sampled observables of one run.

    ``pops`` is the transport observable ``(1 + <sigma_i^z>)/2`` (the full
    marginal, which in the spin-phonon model carries the virtual-dressing
    background); ``config_pops`` is the occupation of the single-excitation
    configuration on each ion (excitation on ion i, all others down), the
    sector the transport experiment tracks.  ``sx1x3`` and ``rl_coherence``
    are evaluated in the drive frame (the accumulated drive phases are
    undone before measuring), which is the frame where the effective-model
    relative phase is defined; both are None for chains other than three
    ions.
    """

    times: np.ndarray
    pops: np.ndarray
    sz: np.ndarray
    nph: np.ndarray
    norm: np.ndarray
    current: np.ndarray
    strobe: np.ndarray
    config_pops: np.ndarray | None = None
    sx1x3: np.ndarray | None = None
    rl_coherence: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_ions(self) -> int:
        return self.pops.shape[1]

    def strobe_rows(self):
        return np.flatnonzero(self.strobe)


# ---------------------------------------------------------------------------
# phonon and full-space operators

def _phonon_ops(n_modes: int, n_max: int):
    """Sparse a_m, a_m^dagger and number operators on the phonon product."""
    ad1 = sp.csr_matrix(np.diag(np.sqrt(np.arange(1, n_max)), -1).astype(np.complex128))
    a1 = ad1.conj().T.tocsr()
    id1 = sp.identity(n_max, format="csr", dtype=np.complex128)

    def embed(op, m):
        out = sp.identity(1, format="csr", dtype=np.complex128)
        for k in range(n_modes):
            out = sp.kron(out, op if k == m else id1, format="csr")
        return out

    a = [embed(a1, m) for m in range(n_modes)]
    ad = [embed(ad1, m) for m in range(n_modes)]
    num = [(ad[m] @ a[m]).tocsr() for m in range(n_modes)]
    return a, ad, num


def phonon_number_diagonal(n_modes: int, n_max: int) -> np.ndarray:
    """Total phonon occupation per phonon basis index."""
    d = np.zeros(1)
    for _ in range(n_modes):
        d = (d[:, None] + np.arange(n_max)[None, :]).reshape(-1)
    return d


def build_dicke_hamiltonian(
    t: float,
    modes: ModeData,
    spec: TrapSpec,
    drive_fields,
    fock: FockSpec,
) -> sp.csr_matrix:
    """Instantaneous lab-frame spin-phonon Hamiltonian.

    ``sum_m w_m a_m^+ a_m + sin(w_beat t) sum_{i,m} rabi_i eta_im
    (a_m + a_m^+) sigma_i^x + sum_i drive_fields_i sigma_i^z`` on the
    truncated product space.
    """
    n = spec.n_ions
    fock.dimension(n)
    a, ad, num = _phonon_ops(n, fock.n_max)
    iph = sp.identity(fock.n_max**n, format="csr", dtype=np.complex128)
    isp = sp.identity(2**n, format="csr", dtype=np.complex128)
    H = sp.csr_matrix((2**n * fock.n_max**n,) * 2, dtype=np.complex128)
    for m in range(n):
        H = H + modes.mode_freqs[m] * sp.kron(isp, num[m], format="csr")
    s = np.sin(spec.beat_note * t)
    if s != 0.0:
        eta = modes.lamb_dicke
        for i in range(n):
            sx = sigma_x(i, n)
            for m in range(n):
                g = spec.rabi[i] * eta[i, m] * s
                H = H + g * sp.kron(sx, (a[m] + ad[m]), format="csr")
    bmat = build_field(np.asarray(drive_fields, dtype=float))
    H = H + sp.kron(bmat, iph, format="csr")
    return H.tocsr()


class StructuredGenerator:
    """Hamiltonian ``H(t) = sum_k c_k(t) H_k`` on one fixed CSR pattern.

    The components are aligned to the union sparsity pattern once, so a step
    only recombines data vectors (one small gemv) before the Krylov apply.
    """

    def __init__(self, components):
        mats = [m.tocsr() for m in components]
        pattern = None
        for m in mats:
            absm = m.copy()
            absm.data = np.ones_like(absm.data)
            pattern = absm if pattern is None else (pattern + absm)
        pattern = pattern.tocsr()
        pattern.sort_indices()
        self.indptr = np.ascontiguousarray(pattern.indptr, dtype=np.int32)
        self.indices = np.ascontiguousarray(pattern.indices, dtype=np.int32)
        self.nnz = pattern.nnz
        self.dim = pattern.shape[0]
        self.comp_data = np.zeros((len(mats), self.nnz), dtype=np.complex128)
        for k, m in enumerate(mats):
            m = m.tocoo()
            for r, c, v in zip(m.row, m.col, m.data):
                lo, hi = self.indptr[r], self.indptr[r + 1]
                pos = lo + np.searchsorted(self.indices[lo:hi], c)
                self.comp_data[k, pos] += v
        self._cache_key = None
        self._cache_data = None

    def data_at(self, coeffs) -> np.ndarray:
        key = tuple(coeffs)
        if key != self._cache_key:
            self._cache_data = np.asarray(coeffs, dtype=np.complex128) @ self.comp_data
            self._cache_key = key
        return self._cache_data

    def matrix_at(self, coeffs) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.data_at(coeffs).copy(), self.indices, self.indptr),
            shape=(self.dim, self.dim),
        )


def dicke_generator(
    modes: ModeData, spec: TrapSpec, fock: FockSpec, frame: str
):
    """Structured generator plus its time-coefficient layout.

    Components: one static phonon diagonal, one spin-phonon coupling block,
    and one sigma_z diagonal per ion.  Coefficients are
    ``[1, carrier(t), b_1(t), ..., b_N(t)]`` where the carrier is
    ``sin(w_beat t)`` in the lab frame and identically 1 in the rotating
    frame (whose coupling is the co-rotating quadrature at shifted phonon
    energies ``-delta_m``).
    """
    n = spec.n_ions
    fock.dimension(n)
    a, ad, num = _phonon_ops(n, fock.n_max)
    iph = sp.identity(fock.n_max**n, format="csr", dtype=np.complex128)
    isp = sp.identity(2**n, format="csr", dtype=np.complex128)
    eta = modes.lamb_dicke
    delta = spec.beat_note - modes.mode_freqs

    if frame == "lab":
        ph_diag = sum(
            modes.mode_freqs[m] * sp.kron(isp, num[m], format="csr") for m in range(n)
        )
        coupling = None
        for i in range(n):
            sx = sigma_x(i, n)
            for m in range(n):
                term = spec.rabi[i] * eta[i, m] * sp.kron(
                    sx, (a[m] + ad[m]), format="csr"
                )
                coupling = term if coupling is None else coupling + term
    elif frame == "rwa":
        ph_diag = sum(
            -delta[m] * sp.kron(isp, num[m], format="csr") for m in range(n)
        )
        coupling = None
        for i in range(n):
            sx = sigma_x(i, n)
            for m in range(n):
                term = (0.5 * spec.rabi[i] * eta[i, m]) * sp.kron(
                    sx, 1j * (ad[m] - a[m]), format="csr"
                )
                coupling = term if coupling is None else coupling + term
    else:
        raise ValueError("frame must be 'lab' or 'rwa'")

    zdiags = [
        sp.kron(sp.diags(sz_diagonal(i, n).astype(np.complex128)), iph, format="csr")
        for i in range(n)
    ]
    gen = StructuredGenerator([ph_diag.tocsr(), coupling.tocsr()] + zdiags)
    return gen


# ---------------------------------------------------------------------------
# sampling apparatus shared by the engines

def sample_grid(window: float, period: float, n_samples: int, extra=()):
    """Uniform grid over (0, window] merged with stroboscopic times mT."""
    ts = list(np.linspace(window / n_samples, window, n_samples))
    m = 1
    while m * period <= window * (1 + 1e-12):
        ts.append(m * period)
        m += 1
    ts.extend(t for t in extra if 0 < t <= window * (1 + 1e-12))
    ts = np.array(sorted(ts))
    keep = [0]
    for k in range(1, len(ts)):
        if ts[k] - ts[keep[-1]] > 1e-12 * max(window, 1e-30):
            keep.append(k)
    return ts[keep]


def strobe_flags(times: np.ndarray, period: float) -> np.ndarray:
    m = np.round(times / period)
    return np.abs(times - m * period) < 1e-9 * period


class _ObservableRecorder:
    """Computes and stores per-sample observables for either engine."""

    def __init__(self, n_ions, n_samples, protocol, couplings=None, n_ph_dim=1):
        self.n = n_ions
        self.ph_dim = n_ph_dim
        self.sz_diags = np.array([sz_diagonal(i, n_ions) for i in range(n_ions)])
        self.exc_idx = np.array([excitation_index(i, n_ions)
                                 for i in range(n_ions)])
        self.nph_diag = None
        self.chi = chi_profile(protocol)
        self.current_op = None
        if couplings is not None and n_ions == 3:
            self.current_op = chiral_current_operator(couplings)
        self.sx13 = None
        if n_ions == 3:
            self.sx13 = (sigma_x(0, 3) @ sigma_x(2, 3)).toarray()
        self.pops = np.zeros((n_samples, n_ions))
        self.config_pops = np.zeros((n_samples, n_ions))
        self.sz = np.zeros((n_samples, n_ions))
        self.nph = np.full(n_samples, np.nan)
        self.norm = np.zeros(n_samples)
        self.current = np.full(n_samples, np.nan)
        self.sx1x3 = np.full(n_samples, np.nan) if n_ions == 3 else None
        self.rl_coh = (
            np.zeros(n_samples, dtype=np.complex128) if n_ions == 3 else None
        )
        self._iL = excitation_index(0, n_ions) if n_ions == 3 else None
        self._iR = excitation_index(2, n_ions) if n_ions == 3 else None

    def record(self, k, t, psi):
        A = psi.reshape(2**self.n, self.ph_dim)
        spin_probs = np.einsum("sp,sp->s", A.conj(), A).real
        nrm2 = spin_probs.sum()
        self.norm[k] = np.sqrt(nrm2)
        self.sz[k] = (self.sz_diags @ spin_probs) / max(nrm2, 1e-300)
        self.pops[k] = (1.0 + self.sz[k]) / 2.0
        self.config_pops[k] = spin_probs[self.exc_idx] / max(nrm2, 1e-300)
        if self.nph_diag is not None:
            ph_probs = np.einsum("sp,sp->p", A.conj(), A).real
            self.nph[k] = float(ph_probs @ self.nph_diag) / max(nrm2, 1e-300)
        if self.n == 3:
            rho = A @ A.conj().T
            phase = np.exp(1j * (self.sz_diags.T @ self.chi(t)))
            rho_drive = phase[:, None] * rho * np.conj(phase)[None, :]
            self.sx1x3[k] = float(np.trace(rho_drive @ self.sx13).real)
            self.rl_coh[k] = rho_drive[self._iR, self._iL]
            if self.current_op is not None:
                self.current[k] = float(np.trace(rho @ self.current_op).real)

    def build(self, times, period, meta) -> Trajectory:
        return Trajectory(
            times=times,
            pops=self.pops,
            sz=self.sz,
            nph=self.nph,
            norm=self.norm,
            current=self.current,
            strobe=strobe_flags(times, period),
            config_pops=self.config_pops,
            sx1x3=self.sx1x3,
            rl_coherence=self.rl_coh,
            meta=meta,
        )


def chiral_current_operator(couplings) -> np.ndarray:
    """Loop-current operator on the spin space of a three-ion chain.

    ``i * sum_(loop bonds) (J_ij sigma_i^+ sigma_j^- - h.c.)`` with the loop
    oriented 1 -> 2 -> 3 -> 1.
    """
    from .spinops import sigma_minus, sigma_plus

    Jm = couplings.matrix if hasattr(couplings, "matrix") else (
        couplings.values if isinstance(couplings, CouplingMatrix) else np.asarray(couplings)
    )
    if Jm.shape[0] != 3:
        raise ValueError("the loop current is defined for three ions")
    op = sp.csr_matrix((8, 8), dtype=np.complex128)
    for (i, j) in ((0, 1), (1, 2), (2, 0)):
        hop = Jm[i, j] * (sigma_plus(i, 3) @ sigma_minus(j, 3))
        op = op + 1j * (hop - hop.conj().T)
    return op.toarray()


# ---------------------------------------------------------------------------
# spin-only engine: exact quench stepping

def _segment_hamiltonians(tier, J, protocol, heff=None, j_avg=None):
    n = protocol.n_ions
    hams = []
    if tier == "ising":
        base = build_ising(J).toarray()
        for seg in protocol.segments:
            b = protocol.b0 + protocol.mu0 * np.asarray(seg.multipliers, float)
            hams.append(base + build_field(b).toarray())
    elif tier == "xx":
        base = build_xx(J).toarray()
        for seg in protocol.segments:
            b = protocol.mu0 * np.asarray(seg.multipliers, float)
            hams.append(base + build_field(b).toarray())
    elif tier == "xx_avg":
        javg = j_avg if j_avg is not None else averaged_couplings(J, protocol)
        base = build_xx(javg.matrix).toarray()
        hams = [base for _ in protocol.segments]
    elif tier == "heff":
        H = heff if heff is not None else exact_effective_hamiltonian(J, protocol)
        hams = [np.asarray(H) for _ in protocol.segments]
    else:
        raise ValueError(f"unknown spin tier '{tier}'")
    return hams


def evolve_spin(
    state: np.ndarray,
    tier: str,
    J,
    protocol: DriveProtocol,
    window: float,
    plan: EvolutionPlan = EvolutionPlan(),
    couplings_for_current=None,
    extra_times=(),
) -> Trajectory:
    """Evolve a spin state under one model tier; exact segment quenches.

    Tiers: ``ising`` (static coupling plus the full time-dependent field),
    ``xx`` (number-conserving coupling with the drive quenches, homogeneous
    field removed by its frame), ``xx_avg`` (constant first-order averaged
    coupling), ``heff`` (constant exact stroboscopic generator).
    """
    J = J if isinstance(J, CouplingMatrix) else CouplingMatrix.from_values(J)
    n = protocol.n_ions
    if J.values.shape[0] != n:
        raise ValueError("coupling matrix and protocol disagree on ion count")
    current_ref = couplings_for_current
    if current_ref is None and n == 3:
        current_ref = averaged_couplings(J, protocol)
    hams = _segment_hamiltonians(tier, J, protocol)
    eigs = []
    seen = {}
    seg_eig = []
    for k, H in enumerate(hams):
        key = H.tobytes()
        if key not in seen:
            seen[key] = len(eigs)
            eigs.append(eigh(H))
        seg_eig.append(seen[key])

    T = protocol.period
    times = sample_grid(window, T, plan.n_samples, extra_times)
    rec = _ObservableRecorder(n, len(times), protocol, current_ref, n_ph_dim=1)
    breaks = np.cumsum([0.0] + [seg.duration for seg in protocol.segments])
    psi = np.ascontiguousarray(state, dtype=np.complex128).copy()
    norm0 = np.linalg.norm(psi)
    tcur, it = 0.0, 0
    eps = 1e-12 * T
    while it < len(times):
        iper = int(np.floor((tcur + eps) / T))
        tper = tcur - iper * T
        si = min(max(int(np.searchsorted(breaks, tper + eps)) - 1, 0), len(hams) - 1)
        seg_end = iper * T + breaks[si + 1]
        t_next = min(seg_end, times[it])
        dt = t_next - tcur
        if dt > 0:
            lam, V = eigs[seg_eig[si]]
            psi = V @ (np.exp(-1j * lam * dt) * (V.conj().T @ psi))
        tcur = t_next
        while it < len(times) and tcur >= times[it] - eps:
            rec.record(it, times[it], psi)
            it += 1
    if abs(np.linalg.norm(psi) - norm0) > plan.norm_guard:
        raise NormDriftError("norm drifted beyond the guard")
    meta = {
        "tier": tier,
        "frame": "spin",
        "period": T,
        "window": window,
        "n_ions": n,
    }
    return rec.build(times, T, meta)


# ---------------------------------------------------------------------------
# full spin-phonon engine: Krylov stepping

def _fastest_frequency(modes: ModeData, spec: TrapSpec, protocol, frame: str):
    if frame == "lab":
        return spec.beat_note
    delta = np.abs(spec.beat_note - modes.mode_freqs)
    bmax = protocol.b0 + protocol.mu0 * max(
        max(abs(k) for k in seg.multipliers) for seg in protocol.segments
    )
    return max(float(np.max(delta)), float(bmax))


def initial_full_state(
    n_ions: int, fock: FockSpec, spin_state=None, fock_occupations=None
) -> np.ndarray:
    """Product state ``spin (x) Fock``; defaults to one excitation on ion 1
    with all modes in the vacuum."""
    sdim = 2**n_ions
    pdim = fock.n_max**n_ions
    if spin_state is None:
        spin = np.zeros(sdim, dtype=np.complex128)
        spin[excitation_index(0, n_ions)] = 1.0
    else:
        spin = np.asarray(spin_state, dtype=np.complex128)
    occ = fock_occupations or (0,) * n_ions
    p = 0
    for nm in occ:
        if not (0 <= nm < fock.n_max):
            raise ValueError("fock occupation outside the truncation")
        p = p * fock.n_max + int(nm)
    ph = np.zeros(pdim, dtype=np.complex128)
    ph[p] = 1.0
    return np.kron(spin, ph)


def evolve_dicke(
    state: np.ndarray,
    plan: EvolutionPlan,
    protocol: DriveProtocol,
    modes: ModeData,
    spec: TrapSpec,
    fock: FockSpec,
    window: float,
    couplings_for_current=None,
    extra_times=(),
) -> Trajectory:
    """Evolve the full spin-phonon state under the driven model.

    The generator is frozen at each step midpoint (exact within segments of
    the rotating frame, where only the drive fields switch) and applied with
    the Lanczos kernel at the plan's per-step tolerance.
    """
    n = spec.n_ions
    dim = fock.dimension(n)
    if state.shape[0] != dim:
        raise ValueError("state dimension does not match the Fock truncation")
    gen = dicke_generator(modes, spec, fock, plan.frame)
    T = protocol.period
    times = sample_grid(window, T, plan.n_samples, extra_times)
    rec = _ObservableRecorder(
        n, len(times), protocol, couplings_for_current, n_ph_dim=fock.n_max**n
    )
    rec.nph_diag = phonon_number_diagonal(n, fock.n_max)

    f_fast = _fastest_frequency(modes, spec, protocol, plan.frame)
    max_step = TWO_PI / (plan.oversampling * f_fast)

    # mesh: segment breakpoints over the window, then the sample times
    breaks = np.cumsum([0.0] + [seg.duration for seg in protocol.segments])
    mesh = set(times.tolist())
    nper = int(np.floor(window / T + 1e-12)) + 1
    for p in range(nper):
        for b in breaks[1:]:
            tb = p * T + b
            if tb < window * (1 + 1e-12):
                mesh.add(tb)
    mesh = np.array(sorted(mesh))

    psi = np.ascontiguousarray(state, dtype=np.complex128).copy()
    norm0 = np.linalg.norm(psi)
    eps = 1e-12 * T
    it = 0
    tcur = 0.0
    omega = spec.beat_note
    m_hint = 2
    for t_next in mesh:
        span = t_next - tcur
        if span > eps:
            nsub = max(1, int(np.ceil(span / max_step - 1e-9)))
            dt = span / nsub
            for k in range(nsub):
                tmid = tcur + (k + 0.5) * dt
                mults = protocol.multipliers_at(tmid)
                b = protocol.b0 + protocol.mu0 * np.asarray(mults, float)
                carrier = np.sin(omega * tmid) if plan.frame == "lab" else 1.0
                coeffs = (1.0, carrier) + tuple(b)
                data = gen.data_at(coeffs)
                psi, m_used = lanczos_apply(
                    gen.indptr, gen.indices, data, psi, dt,
                    plan.krylov_tol, plan.krylov_dim, m_hint,
                )
                m_hint = max(2, m_used - 2)
        tcur = t_next
        while it < len(times) and tcur >= times[it] - eps:
            rec.record(it, times[it], psi)
            it += 1
        nrm = rec.norm[it - 1] if it > 0 else np.linalg.norm(psi)
        if abs(nrm - norm0) > plan.norm_guard:
            raise NormDriftError(
                f"norm drifted to {nrm:.12f} at t = {tcur:.3e}"
            )
    meta = {
        "tier": "dicke",
        "frame": plan.frame,
        "period": T,
        "window": window,
        "n_ions": n,
        "n_max": fock.n_max,
        "oversampling": plan.oversampling,
        "krylov_dim": plan.krylov_dim,
        "krylov_tol": plan.krylov_tol,
    }
    return rec.build(times, T, meta)


def spin_marginal(psi: np.ndarray, n_ions: int, fock: FockSpec) -> np.ndarray:
    """Reduced spin density matrix of a full-space state."""
    A = psi.reshape(2**n_ions, fock.n_max**n_ions)
    return A @ A.conj().T


# ---------------------------------------------------------------------------
# trajectory CSV (columns fixed: see header below)

def write_trajectory_csv(path, traj: Trajectory):
    n = traj.n_ions
    cols = (
        ["t"]
        + [f"pop_{i+1}" for i in range(n)]
        + [f"sz_{i+1}" for i in range(n)]
        + ["nph_total", "norm", "strobe_flag"]
    )
    lines = [",".join(cols)]
    for k in range(len(traj.times)):
        row = [f"{traj.times[k]:.17g}"]
        row += [f"{traj.pops[k, i]:.17g}" for i in range(n)]
        row += [f"{traj.sz[k, i]:.17g}" for i in range(n)]
        row += [
            f"{traj.nph[k]:.17g}",
            f"{traj.norm[k]:.17g}",
            str(int(traj.strobe[k])),
        ]
        lines.append(",".join(row))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
