"""Spin Hamiltonians on the 2^N product space.

Basis convention: quantization along sigma_z, ion 1 is the leftmost tensor
factor, bit set = spin up = one excitation.  Couplings act through sigma_x
(Ising) or the number-conserving ladder combination (XX); transverse fields
act through sigma_z.  The transport observable is the excitation population
``pop_i = (1 + <sigma_i^z>) / 2``.

Each unordered pair contributes once to a coupling sum, so the
single-excitation block of the XX Hamiltonian is the coupling matrix itself.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .chain import CouplingMatrix

_SX = sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]], dtype=np.complex128))
_SY = sp.csr_matrix(np.array([[0.0, -1.0j], [1.0j, 0.0]]))
_SZ = sp.csr_matrix(np.diag([1.0, -1.0]).astype(np.complex128))
_SP = sp.csr_matrix(np.array([[0.0, 1.0], [0.0, 0.0]], dtype=np.complex128))
_SM = sp.csr_matrix(np.array([[0.0, 0.0], [1.0, 0.0]], dtype=np.complex128))
_ID = sp.identity(2, format="csr", dtype=np.complex128)


def single_site(op, i: int, n: int) -> sp.csr_matrix:
    """Embed a one-qubit operator on ion ``i`` (0-based) of an n-ion chain."""
    out = sp.identity(1, format="csr", dtype=np.complex128)
    for k in range(n):
        out = sp.kron(out, op if k == i else _ID, format="csr")
    return out


def sigma_x(i, n):
    return single_site(_SX, i, n)


def sigma_y(i, n):
    return single_site(_SY, i, n)


def sigma_z(i, n):
    return single_site(_SZ, i, n)


def sigma_plus(i, n):
    return single_site(_SP, i, n)


def sigma_minus(i, n):
    return single_site(_SM, i, n)


def sz_diagonal(i: int, n: int) -> np.ndarray:
    """Diagonal of sigma_z on ion i, as a length-2^n real vector."""
    d = np.ones(1)
    for k in range(n):
        d = np.kron(d, np.array([1.0, -1.0]) if k == i else np.ones(2))
    return d


def excitation_index(i: int, n: int) -> int:
    """Basis index of the state with only ion ``i`` (0-based) excited."""
    # up = first single-qubit basis state, so flipping ion i down->up clears
    # its bit relative to the all-down state 2^n - 1
    return (2**n - 1) ^ (1 << (n - 1 - i))


def vacuum_index(n: int) -> int:
    """Basis index of the all-down state."""
    return 2**n - 1


def single_excitation_state(i: int, n: int) -> np.ndarray:
    psi = np.zeros(2**n, dtype=np.complex128)
    psi[excitation_index(i, n)] = 1.0
    return psi


def _as_matrix(J) -> np.ndarray:
    if isinstance(J, CouplingMatrix):
        return J.values
    return np.asarray(J)


def build_ising(J) -> sp.csr_matrix:
    """``sum_{i<j} J_ij sigma_i^x sigma_j^x`` (each bond once)."""
    Jm = _as_matrix(J)
    if np.max(np.abs(Jm.imag)) > 1e-12 * max(1.0, np.max(np.abs(Jm))):
        raise ValueError("Ising couplings must be real")
    Jm = Jm.real
    n = Jm.shape[0]
    H = sp.csr_matrix((2**n, 2**n), dtype=np.complex128)
    for i in range(n):
        for j in range(i + 1, n):
            if Jm[i, j] != 0.0:
                H = H + Jm[i, j] * (sigma_x(i, n) @ sigma_x(j, n))
    return H.tocsr()


def build_xx(Jc) -> sp.csr_matrix:
    """``sum_{i<j} (J_ij sigma_i^+ sigma_j^- + h.c.)`` for Hermitian J."""
    Jm = _as_matrix(Jc).astype(np.complex128)
    if np.max(np.abs(Jm - Jm.conj().T)) > 1e-12 * max(1.0, np.max(np.abs(Jm))):
        raise ValueError("XX couplings must form a Hermitian matrix")
    n = Jm.shape[0]
    H = sp.csr_matrix((2**n, 2**n), dtype=np.complex128)
    for i in range(n):
        for j in range(i + 1, n):
            if Jm[i, j] != 0.0:
                hop = Jm[i, j] * (sigma_plus(i, n) @ sigma_minus(j, n))
                H = H + hop + hop.conj().T
    return H.tocsr()


def build_field(b) -> sp.csr_matrix:
    """``sum_i b_i sigma_i^z``; diagonal in the computational basis."""
    b = np.atleast_1d(np.asarray(b, dtype=float))
    n = len(b)
    diag = np.zeros(2**n)
    for i in range(n):
        diag += b[i] * sz_diagonal(i, n)
    return sp.diags(diag.astype(np.complex128), format="csr")


def total_sz(n: int) -> sp.csr_matrix:
    return build_field(np.ones(n))


def excitation_number_diagonal(n: int) -> np.ndarray:
    """Number of excitations (up spins) per basis state."""
    diag = np.zeros(2**n)
    for i in range(n):
        diag += (1.0 + sz_diagonal(i, n)) / 2.0
    return diag


def single_excitation_block(op, n: int = None, tol=1e-10) -> np.ndarray:
    """Restriction of a number-conserving operator to one-excitation states.

    Rows/columns ordered by excited-ion index.  Raises when the operator has
    off-block weight above ``tol`` relative to its norm.
    """
    A = op.toarray() if sp.issparse(op) else np.asarray(op)
    dim = A.shape[0]
    if n is None:
        n = int(round(np.log2(dim)))
    nexc = excitation_number_diagonal(n)
    scale = max(1.0, np.max(np.abs(A)))
    mask = np.abs(nexc[:, None] - nexc[None, :]) > 0.5
    off = np.max(np.abs(A[mask])) if mask.any() else 0.0
    if off > tol * scale:
        raise ValueError(
            f"operator does not conserve excitation number "
            f"(off-block weight {off:.2e})"
        )
    idx = [excitation_index(i, n) for i in range(n)]
    return A[np.ix_(idx, idx)]


def loop_flux(Jc) -> float:
    """Gauge-invariant loop phase ``arg(J_12 J_23 J_31)`` of a triangle."""
    Jm = _as_matrix(Jc)
    if Jm.shape[0] != 3:
        raise ValueError("loop flux is defined for three ions")
    return float(np.angle(Jm[0, 1] * Jm[1, 2] * Jm[2, 0]))


def normalize(psi: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(psi)
    if norm == 0:
        raise ValueError("cannot normalize the zero state")
    return psi / norm


def to_coordinate_text(op, tol=0.0) -> str:
    """Coordinate-format dump (``row col re im`` per line) for debugging."""
    coo = op.tocoo() if sp.issparse(op) else sp.coo_matrix(np.asarray(op))
    lines = [f"# dim {coo.shape[0]} nnz {coo.nnz}"]
    order = np.lexsort((coo.col, coo.row))
    for k in order:
        v = complex(coo.data[k])
        if abs(v) > tol:
            lines.append(f"{coo.row[k]} {coo.col[k]} {v.real!r} {v.imag!r}")
    return "\n".join(lines) + "\n"
