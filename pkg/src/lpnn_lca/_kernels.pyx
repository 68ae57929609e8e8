# cython: language_level=3
"""Compiled kernels: element-wise box projection / soft threshold and the
forward-Euler loop for the four LPNN-LCA dynamics.

The measurement matrix is passed C-contiguous (row-major, shape m x n).  To
BLAS (column-major) that buffer is the n x m matrix Phi^T with lda = n, so
Phi @ v is dgemv('T') and Phi^T @ v is dgemv('N').
"""
import numpy as np

from libc.math cimport isfinite, fabs, sqrt
from scipy.linalg.cython_blas cimport dgemv

DEF ORIGINAL = 0
DEF ORIGINAL_AUGMENTED = 1
DEF IMPROVED = 2
DEF IMPROVED_AUGMENTED = 3

DEF CONVERGED = 0
DEF MAX_ITERS = 1
DEF DIVERGED = 2


cdef inline double _clamp(double v, double kappa) noexcept nogil:
    if v > kappa:
        return kappa
    if v < -kappa:
        return -kappa
    return v


def project_box(const double[::1] u, double kappa, double[::1] out):
    cdef Py_ssize_t i, n = u.shape[0]
    with nogil:
        for i in range(n):
            out[i] = _clamp(u[i], kappa)


def soft_threshold(const double[::1] u, double kappa, double[::1] out):
    cdef Py_ssize_t i, n = u.shape[0]
    with nogil:
        for i in range(n):
            out[i] = u[i] - _clamp(u[i], kappa)


cdef inline void _phi_mv(const double[:, ::1] phi, double alpha, double* v,
                         double beta, double* y) noexcept nogil:
    # y <- alpha * Phi @ v + beta * y
    cdef int n = <int>phi.shape[1], m = <int>phi.shape[0], one = 1
    cdef char trans = b'T'
    dgemv(&trans, &n, &m, &alpha, <double*>&phi[0, 0], &n, v, &one, &beta, y, &one)


cdef inline void _phit_mv(const double[:, ::1] phi, double alpha, double* v,
                          double beta, double* y) noexcept nogil:
    # y <- alpha * Phi^T @ v + beta * y
    cdef int n = <int>phi.shape[1], m = <int>phi.shape[0], one = 1
    cdef char trans = b'N'
    dgemv(&trans, &n, &m, &alpha, <double*>&phi[0, 0], &n, v, &one, &beta, y, &one)


def euler_solve(const double[:, ::1] phi, const double[::1] b,
                double[::1] u, double[::1] lam,
                int variant, double mu, double kappa,
                Py_ssize_t max_iters, double tol_residual, double tol_state,
                double[:, ::1] residual_trace=None,
                double[:, ::1] state_trace=None):
    """Run forward Euler in place on ``u`` and ``lam``.

    Returns ``(iters, status, primal, stationarity)`` where status is
    0 (converged), 1 (iteration cap) or 2 (non-finite state).
    """
    cdef Py_ssize_t m = phi.shape[0], n = phi.shape[1]
    cdef Py_ssize_t i, k = 0
    cdef int status = MAX_ITERS
    cdef bint augmented = variant == ORIGINAL_AUGMENTED or variant == IMPROVED_AUGMENTED
    cdef bint improved = variant == IMPROVED or variant == IMPROVED_AUGMENTED
    cdef bint record_res = residual_trace is not None
    cdef bint record_state = state_trace is not None
    cdef double primal = 0.0, station = 0.0, change = 0.0, acc, d
    cdef bint finite

    x_arr = np.empty(n)
    p_arr = np.empty(n)
    mm_arr = np.empty(n)
    du_arr = np.empty(n)
    nn_arr = np.empty(m)
    dl_arr = np.empty(m)
    cdef double[::1] x = x_arr, p = p_arr, M = mm_arr, du = du_arr
    cdef double[::1] N = nn_arr, dl = dl_arr

    with nogil:
        while True:
            for i in range(n):
                p[i] = _clamp(u[i], kappa)
                x[i] = u[i] - p[i]
            for i in range(m):
                N[i] = -b[i]
            _phi_mv(phi, 1.0, &x[0], 1.0, &N[0])
            for i in range(n):
                M[i] = 0.0
            _phit_mv(phi, -1.0, &lam[0], 0.0, &M[0])
            acc = 0.0
            for i in range(m):
                acc = acc + N[i] * N[i]
            primal = sqrt(acc)
            station = 0.0
            for i in range(n):
                M[i] = M[i] - p[i]
                if fabs(M[i]) > station:
                    station = fabs(M[i])
            if record_res:
                residual_trace[k, 0] = primal
                residual_trace[k, 1] = station
            if record_state:
                for i in range(n):
                    state_trace[k, i] = u[i]
                for i in range(m):
                    state_trace[k, n + i] = lam[i]
            if k > 0 and primal <= tol_residual and change <= tol_state:
                status = CONVERGED
                break
            if k >= max_iters:
                status = MAX_ITERS
                break

            for i in range(n):
                du[i] = M[i]
            if augmented:
                _phit_mv(phi, -1.0, &N[0], 1.0, &du[0])
            for i in range(m):
                dl[i] = N[i]
            if improved:
                _phi_mv(phi, 1.0, &M[0], 1.0, &dl[0])

            change = 0.0
            finite = True
            for i in range(n):
                d = mu * du[i]
                u[i] = u[i] + d
                if not isfinite(u[i]):
                    finite = False
                if fabs(d) > change:
                    change = fabs(d)
            for i in range(m):
                d = mu * dl[i]
                lam[i] = lam[i] + d
                if not isfinite(lam[i]):
                    finite = False
                if fabs(d) > change:
                    change = fabs(d)
            k += 1
            if not finite:
                status = DIVERGED
                break
    return k, status, primal, station
