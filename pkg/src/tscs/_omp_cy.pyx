# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled greedy pursuit kernel.

Mirrors the operation sequence of ``_omp_np.greedy_path`` with the hot loop
in C: BLAS calls for the correlation and residual updates, explicit
triangular solves for the incrementally updated Cholesky factor.  See the
fallback module for the shared contract.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, fabs, sqrt
from scipy.linalg.cython_blas cimport ddot, dgemv

cnp.import_array()

cdef double RANK_EPS = 1e-13


cdef void _forward_sub(double[:, ::1] low, double* b, double* out, int n) nogil:
    # solve low[:n,:n] @ out = b for lower-triangular low
    cdef int i, j
    cdef double acc
    for i in range(n):
        acc = b[i]
        for j in range(i):
            acc -= low[i, j] * out[j]
        out[i] = acc / low[i, i]


cdef void _backward_sub(double[:, ::1] low, double* b, double* out, int n) nogil:
    # solve low[:n,:n].T @ out = b
    cdef int i, j
    cdef double acc
    for i in range(n - 1, -1, -1):
        acc = b[i]
        for j in range(i + 1, n):
            acc -= low[j, i] * out[j]
        out[i] = acc / low[i, i]


def greedy_path(cnp.ndarray[double, ndim=2, mode="c"] a,
                cnp.ndarray[double, ndim=1] y_in,
                int k, double tol):
    cdef int m = a.shape[0]
    cdef int n = a.shape[1]
    cdef cnp.ndarray[double, ndim=1] y = np.ascontiguousarray(y_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] low_arr = np.zeros((k, k))
    cdef cnp.ndarray[double, ndim=2] cols_arr = np.zeros((k, m))
    cdef cnp.ndarray[double, ndim=1] proj_arr = np.zeros(k)
    cdef cnp.ndarray[double, ndim=1] coef_arr = np.zeros(k)
    cdef cnp.ndarray[double, ndim=1] r_arr = y.copy()
    cdef cnp.ndarray[double, ndim=1] c_arr = np.zeros(n)
    cdef cnp.ndarray[double, ndim=1] norms_arr = np.zeros(n)
    cdef cnp.ndarray[double, ndim=1] work_arr = np.zeros(max(k, m, 1))
    cdef cnp.ndarray[cnp.npy_int64, ndim=1] support_arr = np.zeros(k, dtype=np.int64)
    cdef cnp.ndarray[cnp.npy_uint8, ndim=1] eligible_arr = np.ones(n, dtype=np.uint8)

    cdef double[::1] yv = y
    cdef double[:, ::1] low = low_arr
    cdef double[:, ::1] cols = cols_arr
    cdef double[::1] proj = proj_arr
    cdef double[::1] coef = coef_arr
    cdef double[::1] r = r_arr
    cdef double[::1] c = c_arr
    cdef double[::1] norms = norms_arr
    cdef double[::1] work = work_arr
    cdef cnp.npy_int64[::1] support = support_arr
    cdef cnp.npy_uint8[::1] eligible = eligible_arr
    cdef double[:, ::1] av = a

    cdef int count = 0
    cdef int rank_deficient = 0
    cdef int it, i, j, best
    cdef double aa, dd, score, best_score, rnorm
    cdef int one = 1
    cdef double d_one = 1.0, d_zero = 0.0, d_neg = -1.0
    cdef char TRANS_N = b'N'
    cdef char TRANS_T = b'T'

    with nogil:
        # per-column norms, accumulated row-major so the matrix streams once
        for j in range(n):
            norms[j] = 0.0
        for i in range(m):
            for j in range(n):
                norms[j] += av[i, j] * av[i, j]
        for j in range(n):
            norms[j] = sqrt(norms[j])
            if norms[j] == 0.0:
                eligible[j] = 0

        for it in range(k):
            rnorm = sqrt(ddot(&m, &r[0], &one, &r[0], &one))
            if rnorm <= tol:
                break
            # correlations: c = a.T @ r; the C-order (m, n) buffer is the
            # Fortran-order (n, m) matrix holding a.T
            dgemv(&TRANS_N, &n, &m, &d_one, &av[0, 0], &n, &r[0], &one,
                  &d_zero, &c[0], &one)
            best = -1
            best_score = -INFINITY
            for j in range(n):
                if not eligible[j]:
                    continue
                score = fabs(c[j]) / norms[j]
                if score > best_score:
                    best_score = score
                    best = j
            if best < 0:
                break
            # pull the chosen (strided) column into the contiguous support block
            for i in range(m):
                cols[count, i] = av[i, best]
            aa = ddot(&m, &cols[count, 0], &one, &cols[count, 0], &one)
            if count > 0:
                # Cholesky append: v = cols[:count] @ col, w = solve(L, v);
                # the C-order (k, m) support block is Fortran (m, k), so the
                # row-by-vector products need the transposed call
                dgemv(&TRANS_T, &m, &count, &d_one, &cols[0, 0], &m,
                      &cols[count, 0], &one, &d_zero, &c[0], &one)
                _forward_sub(low, &c[0], &work[0], count)
                dd = aa - ddot(&count, &work[0], &one, &work[0], &one)
                if dd <= RANK_EPS * aa:
                    support[count] = best
                    count += 1
                    rank_deficient = 1
                    break
                for j in range(count):
                    low[count, j] = work[j]
                low[count, count] = sqrt(dd)
            else:
                low[0, 0] = sqrt(aa)
            proj[count] = ddot(&m, &cols[count, 0], &one, &yv[0], &one)
            support[count] = best
            eligible[best] = 0
            count += 1
            # coefficients on the support: L L^T coef = proj
            _forward_sub(low, &proj[0], &work[0], count)
            _backward_sub(low, &work[0], &coef[0], count)
            # residual: r = y - cols[:count].T @ coef
            for i in range(m):
                r[i] = yv[i]
            dgemv(&TRANS_N, &m, &count, &d_neg, &cols[0, 0], &m, &coef[0],
                  &one, &d_one, &r[0], &one)

    ncoef = count - 1 if rank_deficient else count
    return (support_arr[:count].copy(), coef_arr[:ncoef].copy(), count,
            bool(rank_deficient))
