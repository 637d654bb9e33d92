"""Static properties of a linear ion chain.

Equilibrium geometry, transverse normal modes, ion-light coupling factors,
and the beat-note-detuned spin-spin coupling matrix.  All frequencies are
angular (rad/s) throughout; axial positions are dimensionless, in units of
the Coulomb length ``l = (e^2 / (4 pi eps0 M omega_z^2))^(1/3)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi


class ZigzagInstabilityError(ValueError):
    """Transverse confinement too weak for a stable linear chain."""


class ModeResonanceError(ValueError):
    """Beat note too close to a motional mode for a dispersive coupling."""


class PositionSolveError(RuntimeError):
    """Equilibrium position solve failed to reach the residual target."""


@dataclass(frozen=True)
class TrapSpec:
    """Trap and laser parameters for a linear chain.

    Attributes
    ----------
    n_ions : number of ions
    mass_amu : ion mass in atomic mass units
    omega_xy : transverse trap frequency (rad/s)
    omega_z : axial trap frequency (rad/s)
    rabi : per-ion carrier Rabi frequencies (rad/s), length ``n_ions``
    omega_rec : photon recoil frequency (rad/s)
    delta_com : beat-note detuning above the transverse COM mode (rad/s)
    """

    n_ions: int
    mass_amu: float
    omega_xy: float
    omega_z: float
    rabi: tuple
    omega_rec: float
    delta_com: float

    def __post_init__(self):
        if self.n_ions < 1:
            raise ValueError("n_ions must be >= 1")
        if not (self.omega_xy > self.omega_z > 0):
            raise ValueError("need omega_xy > omega_z > 0 for a linear chain")
        if self.omega_rec < 0 or self.mass_amu <= 0:
            raise ValueError("omega_rec must be >= 0 and mass positive")
        rabi = tuple(float(r) for r in np.atleast_1d(self.rabi))
        if len(rabi) == 1 and self.n_ions > 1:
            rabi = rabi * self.n_ions
        if len(rabi) != self.n_ions:
            raise ValueError("rabi must give one value per ion")
        object.__setattr__(self, "rabi", rabi)

    @property
    def beat_note(self) -> float:
        """Raman beat note, blue of the transverse COM mode (rad/s)."""
        return self.omega_xy + self.delta_com


@dataclass(frozen=True)
class ModeData:
    """Equilibrium positions and transverse normal-mode data.

    ``mode_matrix[i, m]`` is the amplitude of ion ``i`` in mode ``m``; modes
    are ordered by descending frequency, so column 0 is the COM mode at
    ``omega_xy``.  ``lamb_dicke[i, m] = mode_matrix[i, m] *
    sqrt(omega_rec / mode_freqs[m])``.
    """

    positions: np.ndarray
    mode_freqs: np.ndarray
    mode_matrix: np.ndarray
    lamb_dicke: np.ndarray = field(default=None)


@dataclass(frozen=True)
class CouplingMatrix:
    """Hermitian spin-spin coupling matrix (rad/s) with zero diagonal.

    ``j_rms`` is the root mean square over the N(N-1)/2 independent
    off-diagonal entries.
    """

    values: np.ndarray
    j_rms: float

    @classmethod
    def from_values(cls, values) -> "CouplingMatrix":
        values = np.asarray(values)
        n = values.shape[0]
        if values.shape != (n, n):
            raise ValueError("coupling matrix must be square")
        if np.max(np.abs(values - values.conj().T)) > 1e-12 * max(
            1.0, np.max(np.abs(values))
        ):
            raise ValueError("coupling matrix must be Hermitian")
        off = values[np.triu_indices(n, 1)]
        j_rms = float(np.sqrt(np.mean(np.abs(off) ** 2))) if n > 1 else 0.0
        vals = values.copy()
        np.fill_diagonal(vals, 0.0)
        vals.setflags(write=False)
        return cls(values=vals, j_rms=j_rms)

    @property
    def n_ions(self) -> int:
        return self.values.shape[0]

    def is_real(self, tol=1e-12) -> bool:
        return bool(np.max(np.abs(self.values.imag)) <= tol * max(1.0, self.j_rms))


def _force_residual(u: np.ndarray) -> np.ndarray:
    """Gradient of the dimensionless chain potential at positions u."""
    n = len(u)
    g = u.copy()
    for i in range(n):
        for j in range(n):
            if j != i:
                d = u[i] - u[j]
                g[i] -= np.sign(d) / d**2
    return g


def equilibrium_positions(spec: TrapSpec, residual_tol=1e-12) -> np.ndarray:
    """Dimensionless equilibrium positions along the trap axis.

    Damped Newton iteration on the force-balance equations from an equally
    spaced seed; deterministic.  Positions come back sorted ascending and
    antisymmetric about the trap center.
    """
    n = spec.n_ions
    if n == 1:
        return np.zeros(1)
    u = np.linspace(-(n - 1) / 2.0, (n - 1) / 2.0, n) * 1.0
    for _ in range(200):
        g = _force_residual(u)
        if np.max(np.abs(g)) < residual_tol:
            break
        H = np.eye(n)
        for i in range(n):
            for j in range(n):
                if j != i:
                    d3 = abs(u[i] - u[j]) ** 3
                    H[i, i] += 2.0 / d3
                    H[i, j] = -2.0 / d3
        step = np.linalg.solve(H, g)
        # damping guards against ion crossings from an aggressive step
        lam = 1.0
        for _ in range(30):
            trial = u - lam * step
            if np.all(np.diff(trial) > 0):
                break
            lam /= 2.0
        u = u - lam * step
    g = _force_residual(u)
    if np.max(np.abs(g)) > 1e-10:
        raise PositionSolveError(
            f"equilibrium solve stalled at residual {np.max(np.abs(g)):.2e}"
        )
    u = np.sort(u)
    return 0.5 * (u - u[::-1])  # symmetrize: exact antisymmetry about 0


def coulomb_curvature(positions: np.ndarray) -> np.ndarray:
    """Dimensionless transverse Coulomb curvature matrix.

    ``C[i, j] = -1/|u_i - u_j|^3`` off the diagonal, with row sums zero; its
    eigenvalues ``lam_m`` soften the transverse modes via
    ``omega_m^2 = omega_xy^2 - lam_m * omega_z^2``.
    """
    n = len(positions)
    C = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if j != i:
                d3 = abs(positions[i] - positions[j]) ** 3
                C[i, j] = -1.0 / d3
                C[i, i] += 1.0 / d3
    return C


def transverse_modes(spec: TrapSpec, positions: np.ndarray) -> ModeData:
    """Transverse normal modes from the chain geometry.

    Modes sorted by descending frequency (COM first at ``omega_xy``); each
    eigenvector's largest-magnitude component is made positive, so the
    output is deterministic.
    """
    C = coulomb_curvature(positions)
    lam, B = np.linalg.eigh(C)
    w2 = spec.omega_xy**2 - lam * spec.omega_z**2
    if np.min(w2) <= 0:
        raise ZigzagInstabilityError(
            "zigzag instability: omega_xy^2 - lam_max * omega_z^2 <= 0 "
            f"(lam_max = {np.max(lam):.4f}); increase omega_xy or reduce N"
        )
    freqs = np.sqrt(w2)
    order = np.argsort(-freqs)
    freqs = freqs[order]
    B = B[:, order]
    for m in range(B.shape[1]):
        k = np.argmax(np.abs(B[:, m]))
        if B[k, m] < 0:
            B[:, m] = -B[:, m]
    B.setflags(write=False)
    freqs.setflags(write=False)
    return ModeData(positions=positions, mode_freqs=freqs, mode_matrix=B)


def lamb_dicke(modes: ModeData, spec: TrapSpec) -> np.ndarray:
    """Ion-mode coupling factors ``eta[i, m] = b[i, m] sqrt(w_rec / w_m)``."""
    if np.any(modes.mode_freqs <= 0):
        raise ValueError("mode frequencies must be positive")
    return modes.mode_matrix * np.sqrt(spec.omega_rec / modes.mode_freqs)[None, :]


def chain_modes(spec: TrapSpec) -> ModeData:
    """Positions, transverse modes, and coupling factors in one call."""
    pos = equilibrium_positions(spec)
    md = transverse_modes(spec, pos)
    eta = lamb_dicke(md, spec)
    eta.setflags(write=False)
    return ModeData(
        positions=md.positions,
        mode_freqs=md.mode_freqs,
        mode_matrix=md.mode_matrix,
        lamb_dicke=eta,
    )


def spin_spin_couplings(
    modes: ModeData, spec: TrapSpec, resonance_tol=1e-3
) -> CouplingMatrix:
    """Static spin-spin coupling matrix from the detuned beat note.

    ``J[i, j] = (rabi_i rabi_j / 2) sum_m eta[i, m] eta[j, m] / delta_m``
    with ``delta_m = beat_note - omega_m``.  The matrix is real symmetric
    with zero diagonal; each bond is counted once in the spin Hamiltonians
    built from it.  The 1/2 is the weight produced by eliminating the
    phonons from the sine-driven spin-phonon coupling at second order, and
    is required to reproduce the benchmark coupling strength of the
    reference parameter set.
    """
    eta = modes.lamb_dicke
    if eta is None:
        eta = lamb_dicke(modes, spec)
    delta = spec.beat_note - modes.mode_freqs
    small = np.abs(delta) < resonance_tol * spec.omega_z
    if np.any(small):
        m = int(np.argmax(small))
        raise ModeResonanceError(
            f"beat note within {resonance_tol:g}*omega_z of mode {m} "
            f"(delta_m = {delta[m]:.3e} rad/s)"
        )
    n = spec.n_ions
    rabi = np.asarray(spec.rabi)
    J = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            J[i, j] = 0.5 * rabi[i] * rabi[j] * np.sum(eta[i] * eta[j] / delta)
            J[j, i] = J[i, j]
    return CouplingMatrix.from_values(J)


def reference_trap(n_ions: int = 3) -> TrapSpec:
    """Reference trap parameter set used throughout the package defaults."""
    return TrapSpec(
        n_ions=n_ions,
        mass_amu=171.0,
        omega_xy=TWO_PI * 5.0e6,
        omega_z=TWO_PI * 900.0e3,
        rabi=(TWO_PI * 200.0e3,) * n_ions,
        omega_rec=TWO_PI * 26.0e3,
        delta_com=TWO_PI * 80.0e3,
    )
