# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled Lanczos exponential kernel.

Same algorithm as ``ionflux._kernels_py`` (the import-time fallback):
Hermitian Lanczos with full one-pass reorthogonalization, checkpointed
convergence tests from a warm-start subspace size, generalized-residual
error estimate.  The CSR matvec and the three-term recurrence run as C
loops; the reorthogonalization uses BLAS through numpy and the small
eigen-solve goes straight to LAPACK ``stev``.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

from scipy.linalg import get_lapack_funcs

cnp.import_array()

COMPILED = True

_stev = get_lapack_funcs("stev", (np.empty(1, dtype=np.float64),))


def _small_expv(alpha_arr, beta_arr, Py_ssize_t m, double dt):
    if m == 1:
        return np.array([np.exp(-1j * dt * alpha_arr[0])])
    w, v, info = _stev(alpha_arr[:m], beta_arr[:m - 1], compute_v=1)
    if info != 0:
        raise np.linalg.LinAlgError(f"stev failed with info={info}")
    return v @ (np.exp(-1j * dt * w) * v[0, :])


def lanczos_expmv(cnp.int32_t[::1] indptr, cnp.int32_t[::1] indices,
                  double complex[::1] data, double complex[::1] psi,
                  double dt, double tol, int m_max, int m_start=2):
    """Approximate exp(-1j*dt*H) @ psi for Hermitian H in CSR form.

    Convergence is tested from subspace size ``m_start`` on (every second
    iteration); see the fallback implementation for the contract.
    """
    if m_start < 2:
        m_start = 2
    if m_start > m_max:
        m_start = m_max
    cdef Py_ssize_t n = psi.shape[0]
    cdef Py_ssize_t i, j, p
    cdef double complex acc
    cdef double beta0 = 0.0, b, scale = 1.0, a

    for i in range(n):
        beta0 += psi[i].real * psi[i].real + psi[i].imag * psi[i].imag
    beta0 = sqrt(beta0)
    if beta0 == 0.0:
        return np.asarray(psi).copy(), 0, 0.0, True

    V_arr = np.empty((m_max + 1, n), dtype=np.complex128)
    alpha_arr = np.zeros(m_max)
    beta_arr = np.zeros(m_max)
    w_arr = np.empty(n, dtype=np.complex128)
    cdef double complex[:, ::1] V = V_arr
    cdef double[::1] alpha = alpha_arr
    cdef double[::1] beta = beta_arr
    cdef double complex[::1] w = w_arr

    for i in range(n):
        V[0, i] = psi[i] / beta0

    y = None
    cdef Py_ssize_t m = 0
    cdef double err = 0.0
    cdef bint converged = False

    for j in range(m_max):
        # w = H @ V[j]
        for i in range(n):
            acc = 0
            for p in range(indptr[i], indptr[i + 1]):
                acc = acc + data[p] * V[j, indices[p]]
            w[i] = acc
        # alpha_j = Re <V_j, w>
        a = 0.0
        for i in range(n):
            a += V[j, i].real * w[i].real + V[j, i].imag * w[i].imag
        alpha[j] = a
        for i in range(n):
            w[i] = w[i] - a * V[j, i]
        if j > 0:
            b = beta[j - 1]
            for i in range(n):
                w[i] = w[i] - b * V[j - 1, i]
        # full reorthogonalization, one BLAS-backed pass (no m x n copies)
        coeffs = np.conj(V_arr[: j + 1] @ np.conj(w_arr))
        w_arr -= V_arr[: j + 1].T @ coeffs
        b = 0.0
        for i in range(n):
            b += w[i].real * w[i].real + w[i].imag * w[i].imag
        b = sqrt(b)
        m = j + 1
        if abs(alpha[j]) > scale:
            scale = abs(alpha[j])
        if b > scale:
            scale = b
        if b <= 1e-14 * scale:
            y = _small_expv(alpha_arr, beta_arr, m, dt)
            err = 0.0
            converged = True
            break
        if (m >= m_start and (m - m_start) % 2 == 0) or m == m_max:
            y = _small_expv(alpha_arr, beta_arr, m, dt)
            err = b * abs(y[m - 1])
            if err <= tol:
                converged = True
                break
        beta[j] = b
        for i in range(n):
            V[j + 1, i] = w[i] / b

    if y is None:
        y = _small_expv(alpha_arr, beta_arr, m, dt)
        err = beta_arr[m - 1] * abs(y[m - 1]) if m > 1 else 0.0
    out = beta0 * (V_arr[:m].T @ y)
    return out, int(m), float(err), bool(converged)
