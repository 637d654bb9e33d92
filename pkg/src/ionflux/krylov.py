"""Krylov-subspace propagation step.

Selects the compiled Lanczos kernel at import time and falls back to the
pure-numpy implementation when the extension was not built.  The public
entry point is :func:`krylov_expm_step`, which applies ``exp(-1j*H*dt)`` to a
state with a per-step error tolerance, splitting the step recursively when
the subspace cap is insufficient.
"""
from __future__ import annotations

import numpy as np
from scipy.sparse import csr_matrix, issparse

try:
    from . import _kernels as _impl
    USING_COMPILED_KERNEL = True
except ImportError:  # extension not built; numpy fallback
    from . import _kernels_py as _impl
    USING_COMPILED_KERNEL = False

MAX_SPLIT_DEPTH = 40


class StiffnessError(RuntimeError):
    """Raised when step halving cannot reach the requested tolerance."""


def as_csr_parts(generator):
    """Return ``(indptr, indices, data)`` int32/complex128 CSR arrays."""
    if issparse(generator):
        H = generator.tocsr()
    else:
        H = csr_matrix(np.asarray(generator, dtype=np.complex128))
    H.sort_indices()
    return (
        np.ascontiguousarray(H.indptr, dtype=np.int32),
        np.ascontiguousarray(H.indices, dtype=np.int32),
        np.ascontiguousarray(H.data, dtype=np.complex128),
    )


def lanczos_apply(indptr, indices, data, psi, dt, tol, m_max, m_start=2,
                  _depth=0):
    """exp(-1j*H*dt) @ psi on raw CSR arrays, with recursive step splitting.

    Returns ``(out, m_used)``; feeding ``m_used`` back as ``m_start`` of the
    next step skips the early convergence checks when consecutive steps need
    similar subspaces.
    """
    out, m, err, converged = _impl.lanczos_expmv(
        indptr, indices, data, psi, dt, tol, m_max, m_start
    )
    if converged:
        return out, m
    if _depth >= MAX_SPLIT_DEPTH:
        raise StiffnessError(
            f"Krylov step did not converge: dt={dt:.3e}, m_max={m_max}, "
            f"error estimate {err:.3e} > tol {tol:.3e} after "
            f"{MAX_SPLIT_DEPTH} halvings"
        )
    half_tol = max(tol / 2, 1e-14)
    half, m1 = lanczos_apply(indptr, indices, data, psi, dt / 2, half_tol,
                             m_max, m_start, _depth + 1)
    return lanczos_apply(indptr, indices, data, half, dt / 2, half_tol,
                         m_max, m1, _depth + 1)


def krylov_expm_step(generator, state, dt, tol=1e-9, m_max=30):
    """Apply ``exp(-1j*generator*dt)`` to ``state``.

    Parameters
    ----------
    generator : Hermitian matrix (dense ndarray or scipy sparse)
    state : complex state vector
    dt : step length (s); the generator is in angular-frequency units
    tol : per-step error tolerance
    m_max : Krylov subspace cap; beyond it the step is split

    Returns the propagated state; the norm is preserved to roundoff.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    indptr, indices, data = as_csr_parts(generator)
    psi = np.ascontiguousarray(state, dtype=np.complex128)
    out, _ = lanczos_apply(indptr, indices, data, psi, dt, tol, m_max)
    return out
