"""Pure-numpy Lanczos exponential kernel.

Fallback implementation of the hot propagation step, used when the compiled
extension (``ionflux._kernels``) is unavailable.  Both implementations follow
the same algorithm: Hermitian Lanczos with full one-pass reorthogonalization,
a small tridiagonal eigen-solve at checkpoints from a warm-start subspace
size on, and the standard generalized-residual error estimate
``beta_m * |y_m|``.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import get_lapack_funcs
from scipy.sparse import csr_matrix

COMPILED = False

_stev = get_lapack_funcs("stev", (np.empty(1, dtype=np.float64),))


def small_expv(alpha, beta, m, dt):
    """y = exp(-1j*dt*T_m) e1 for the real symmetric tridiagonal T_m."""
    if m == 1:
        return np.array([np.exp(-1j * dt * alpha[0])])
    w, v, info = _stev(alpha[:m], beta[: m - 1], compute_v=1)
    if info != 0:
        raise np.linalg.LinAlgError(f"stev failed with info={info}")
    return v @ (np.exp(-1j * dt * w) * v[0, :])


def lanczos_expmv(indptr, indices, data, psi, dt, tol, m_max, m_start=2):
    """Approximate exp(-1j*dt*H) @ psi for Hermitian H in CSR form.

    Convergence is tested from subspace size ``m_start`` on (every second
    iteration), so a caller stepping a slowly varying generator can warm-
    start near the previous step's size.  Returns ``(out, m_used, err_est,
    converged)``; ``converged`` is False when the cap was reached first, and
    the caller is expected to split the step.
    """
    m_start = max(2, min(int(m_start), m_max))
    n = psi.shape[0]
    H = csr_matrix((data, indices, indptr), shape=(n, n), copy=False)
    beta0 = np.linalg.norm(psi)
    if beta0 == 0.0:
        return psi.copy(), 0, 0.0, True

    V = np.empty((m_max + 1, n), dtype=np.complex128)
    V[0] = psi / beta0
    alpha = np.zeros(m_max)
    beta = np.zeros(m_max)
    scale = 1.0

    y = None
    m = 0
    err = np.inf
    converged = False
    for j in range(m_max):
        w = H @ V[j]
        alpha[j] = np.vdot(V[j], w).real
        w -= alpha[j] * V[j]
        if j > 0:
            w -= beta[j - 1] * V[j - 1]
        # one full reorthogonalization pass keeps the basis clean
        coeffs = np.conj(V[: j + 1] @ np.conj(w))
        w -= V[: j + 1].T @ coeffs
        b = np.linalg.norm(w)
        m = j + 1
        scale = max(scale, abs(alpha[j]), b)
        if b <= 1e-14 * scale:
            # happy breakdown: the Krylov space is invariant, result exact
            y = small_expv(alpha, beta, m, dt)
            err = 0.0
            converged = True
            break
        if (m >= m_start and (m - m_start) % 2 == 0) or m == m_max:
            y = small_expv(alpha, beta, m, dt)
            err = b * abs(y[m - 1])
            if err <= tol:
                converged = True
                break
        beta[j] = b
        V[j + 1] = w / b

    if y is None:
        y = small_expv(alpha, beta, m, dt)
        err = beta[m - 1] * abs(y[m - 1]) if m > 1 else 0.0
    out = beta0 * (V[:m].T @ y)
    return out, m, float(err), converged
