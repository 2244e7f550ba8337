# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled numerical hot kernels (BLAS/LAPACK-backed doubling iterations).

Same contract as mtlqg._kernels_py; selected by mtlqg._backend when built.
All matrices are C-contiguous float64.  Row-major buffers are fed to the
Fortran routines via the usual transpose identities, so no layout copies are
made except where LAPACK overwrites its input.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt
from libc.stdlib cimport free, malloc
from libc.string cimport memcpy, memset
from scipy.linalg.cython_blas cimport dgemm
from scipy.linalg.cython_lapack cimport dgeev, dgesv

cnp.import_array()

BACKEND = "cython"

DEF DLYAP_TOL = 1e-14
DEF MAX_DOUBLING = 128


cdef void _mm_nn(int m, int k, int n, double alpha, double* a, double* b,
                 double beta, double* c) noexcept nogil:
    # row-major C(m,n) = alpha * A(m,k) @ B(k,n) + beta * C
    cdef char tn = b'N'
    dgemm(&tn, &tn, &n, &m, &k, &alpha, b, &n, a, &k, &beta, c, &n)


cdef void _mm_nt(int m, int k, int n, double alpha, double* a, double* b,
                 double beta, double* c) noexcept nogil:
    # row-major C(m,n) = alpha * A(m,k) @ B(n,k)^T + beta * C
    cdef char tt = b'T'
    cdef char tn = b'N'
    dgemm(&tt, &tn, &n, &m, &k, &alpha, b, &k, a, &k, &beta, c, &n)


cdef void _mm_tn(int m, int k, int n, double alpha, double* a, double* b,
                 double beta, double* c) noexcept nogil:
    # row-major C(m,n) = alpha * A(k,m)^T @ B(k,n) + beta * C
    cdef char tn = b'N'
    cdef char tt = b'T'
    dgemm(&tn, &tt, &n, &m, &k, &alpha, b, &n, a, &m, &beta, c, &n)


cdef double _fro(double* x, int size) noexcept nogil:
    cdef double s = 0.0
    cdef int i
    for i in range(size):
        s += x[i] * x[i]
    return sqrt(s)


cdef void _symmetrize(double* x, int n) noexcept nogil:
    cdef int i, j
    cdef double v
    for i in range(n):
        for j in range(i + 1, n):
            v = 0.5 * (x[i * n + j] + x[j * n + i])
            x[i * n + j] = v
            x[j * n + i] = v


cdef int _inverse(double* m, double* out, int n, int* ipiv, double* scratch) noexcept nogil:
    # row-major inverse: inverting the transposed (column-major) view of m
    # with an identity RHS leaves M^{-1} in row-major order in `out`
    cdef int info = 0
    cdef int i
    memcpy(scratch, m, n * n * sizeof(double))
    memset(out, 0, n * n * sizeof(double))
    for i in range(n):
        out[i * n + i] = 1.0
    dgesv(&n, &n, scratch, &n, ipiv, out, &n, &info)
    return info


cdef double _rho(double* a, int n, double* acopy, double* wr, double* wi,
                 double* work, int lwork) noexcept nogil:
    # eigenvalue moduli of the transposed view equal those of A itself
    cdef char nn = b'N'
    cdef int info = 0
    cdef int i
    cdef double best = 0.0, mod
    memcpy(acopy, a, n * n * sizeof(double))
    dgeev(&nn, &nn, &n, acopy, &n, wr, wi, NULL, &n, NULL, &n, work, &lwork, &info)
    if info != 0:
        return 1e308
    for i in range(n):
        mod = sqrt(wr[i] * wr[i] + wi[i] * wi[i])
        if mod > best:
            best = mod
    return best


cdef int _dlyap_buf(double* a, double* q, double* x, int n, double tol,
                    double* ak, double* t1, double* t2) noexcept nogil:
    # X = Q + A X A' by doubling; ak/t1/t2 are n*n scratch buffers
    cdef int it, i
    cdef double inc_norm, x_norm
    memcpy(x, q, n * n * sizeof(double))
    memcpy(ak, a, n * n * sizeof(double))
    for it in range(MAX_DOUBLING):
        _mm_nn(n, n, n, 1.0, ak, x, 0.0, t1)      # t1 = Ak X
        _mm_nt(n, n, n, 1.0, t1, ak, 0.0, t2)     # t2 = Ak X Ak'
        inc_norm = _fro(t2, n * n)
        for i in range(n * n):
            x[i] += t2[i]
        _symmetrize(x, n)
        x_norm = _fro(x, n * n)
        if inc_norm <= tol * (1.0 + x_norm):
            return 0
        _mm_nn(n, n, n, 1.0, ak, ak, 0.0, t1)     # t1 = Ak^2
        memcpy(ak, t1, n * n * sizeof(double))
    return 1


def spectral_radius(cnp.ndarray[cnp.float64_t, ndim=2] a not None):
    """Largest eigenvalue modulus of a square matrix."""
    cdef int n = a.shape[0]
    if n == 0:
        return 0.0
    a = np.ascontiguousarray(a)
    cdef int lwork = 8 * n if n > 1 else 8
    cdef double* buf = <double*> malloc((n * n + 2 * n + lwork) * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    cdef double out
    try:
        out = _rho(<double*> a.data, n, buf, buf + n * n, buf + n * n + n,
                   buf + n * n + 2 * n, lwork)
    finally:
        free(buf)
    return float(out)


def dlyap_doubling(cnp.ndarray[cnp.float64_t, ndim=2] a not None,
                   cnp.ndarray[cnp.float64_t, ndim=2] q not None,
                   double tol=DLYAP_TOL, int max_iter=MAX_DOUBLING):
    """Solve X = Q + A X A' by the doubling iteration (assumes rho(A) < 1)."""
    cdef int n = a.shape[0]
    a = np.ascontiguousarray(a)
    q = np.ascontiguousarray(q)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] x = np.empty((n, n))
    cdef double* scratch = <double*> malloc(3 * n * n * sizeof(double))
    if scratch == NULL:
        raise MemoryError()
    try:
        _dlyap_buf(<double*> a.data, <double*> q.data, <double*> x.data, n,
                   tol, scratch, scratch + n * n, scratch + 2 * n * n)
    finally:
        free(scratch)
    return x


def dare_doubling(cnp.ndarray[cnp.float64_t, ndim=2] a not None,
                  cnp.ndarray[cnp.float64_t, ndim=2] b not None,
                  cnp.ndarray[cnp.float64_t, ndim=2] q not None,
                  cnp.ndarray[cnp.float64_t, ndim=2] r not None,
                  double tol=DLYAP_TOL, int max_iter=MAX_DOUBLING):
    """Structure-preserving doubling iteration for the discrete Riccati equation."""
    cdef int n = a.shape[0]
    cdef int m = b.shape[1]
    a = np.ascontiguousarray(a)
    b = np.ascontiguousarray(b)
    q = np.ascontiguousarray(q)
    r = np.ascontiguousarray(r)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] h = np.empty((n, n))
    cdef int nn = n * n
    cdef double* buf = <double*> malloc((8 * nn + 3 * m * m + n * m) * sizeof(double))
    cdef int* ipiv = <int*> malloc((n + m) * sizeof(int))
    if buf == NULL or ipiv == NULL:
        free(buf)
        free(ipiv)
        raise MemoryError()
    cdef double* ak = buf
    cdef double* g = buf + nn
    cdef double* w = buf + 2 * nn
    cdef double* winv = buf + 3 * nn
    cdef double* t1 = buf + 4 * nn
    cdef double* t2 = buf + 5 * nn
    cdef double* t3 = buf + 6 * nn
    cdef double* hnew = buf + 7 * nn
    cdef double* rinv = buf + 8 * nn
    cdef double* rscratch = buf + 8 * nn + m * m
    cdef double* brinv = buf + 8 * nn + 3 * m * m
    cdef int it, i, info
    cdef double diff, hn
    try:
        info = _inverse(<double*> r.data, rinv, m, ipiv, rscratch)
        if info != 0:
            raise np.linalg.LinAlgError("R is singular")
        # G = B R^{-1} B'
        _mm_nn(n, m, m, 1.0, <double*> b.data, rinv, 0.0, brinv)    # B R^{-1}, n x m
        _mm_nt(n, m, n, 1.0, brinv, <double*> b.data, 0.0, g)
        _symmetrize(g, n)
        memcpy(<double*> h.data, <double*> q.data, nn * sizeof(double))
        memcpy(ak, <double*> a.data, nn * sizeof(double))
        for it in range(max_iter):
            _mm_nn(n, n, n, 1.0, g, <double*> h.data, 0.0, w)       # w = G H
            for i in range(n):
                w[i * n + i] += 1.0                                  # w = I + G H
            info = _inverse(w, winv, n, ipiv, t1)
            if info != 0:
                raise np.linalg.LinAlgError("I + G H singular in doubling step")
            _mm_nn(n, n, n, 1.0, winv, ak, 0.0, t1)                 # t1 = (I+GH)^{-1} A
            _mm_nn(n, n, n, 1.0, winv, g, 0.0, t2)                  # t2 = (I+GH)^{-1} G
            # H_new = H + A' H t1
            _mm_nn(n, n, n, 1.0, <double*> h.data, t1, 0.0, t3)     # t3 = H t1
            memcpy(hnew, <double*> h.data, nn * sizeof(double))
            _mm_tn(n, n, n, 1.0, ak, t3, 1.0, hnew)
            _symmetrize(hnew, n)
            # G_new = G + A t2 A'
            _mm_nt(n, n, n, 1.0, t2, ak, 0.0, t3)                   # t3 = t2 A'
            _mm_nn(n, n, n, 1.0, ak, t3, 1.0, g)
            _symmetrize(g, n)
            # A_new = A t1
            _mm_nn(n, n, n, 1.0, ak, t1, 0.0, t3)
            memcpy(ak, t3, nn * sizeof(double))
            diff = 0.0
            for i in range(nn):
                diff += (hnew[i] - (<double*> h.data)[i]) ** 2
            diff = sqrt(diff)
            memcpy(<double*> h.data, hnew, nn * sizeof(double))
            hn = _fro(<double*> h.data, nn)
            if diff <= tol * (1.0 + hn):
                break
    finally:
        free(buf)
        free(ipiv)
    return h


def task_cost_grad(cnp.ndarray[cnp.float64_t, ndim=2] a not None,
                   cnp.ndarray[cnp.float64_t, ndim=2] b not None,
                   cnp.ndarray[cnp.float64_t, ndim=2] qtilde not None,
                   cnp.ndarray[cnp.float64_t, ndim=2] r not None,
                   cnp.ndarray[cnp.float64_t, ndim=2] s_dag not None,
                   cnp.ndarray[cnp.float64_t, ndim=2] sigma_nu not None,
                   cnp.ndarray[cnp.float64_t, ndim=2] ktilde not None):
    """Fused per-task evaluation: (j_quad, grad, rho) as in the pure backend.

    E carries +B'PA, the orientation vanishing at the Riccati optimum under
    the A + BK closed-loop convention.
    """
    cdef int n = a.shape[0]
    cdef int mu = b.shape[1]
    cdef int pz = s_dag.shape[0]
    a = np.ascontiguousarray(a)
    b = np.ascontiguousarray(b)
    qtilde = np.ascontiguousarray(qtilde)
    r = np.ascontiguousarray(r)
    s_dag = np.ascontiguousarray(s_dag)
    sigma_nu = np.ascontiguousarray(sigma_nu)
    ktilde = np.ascontiguousarray(ktilde)
    cdef int nn = n * n
    cdef int lwork = 8 * n if n > 1 else 8
    cdef int total = 4 * mu * n + mu * mu + 8 * nn + (nn + 2 * n + lwork)
    cdef double* buf = <double*> malloc(total * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    cdef double* ks = buf                          # mu x n
    cdef double* e = ks + mu * n                   # mu x n
    cdef double* bp = e + mu * n                   # mu x n
    cdef double* t_mu_n = bp + mu * n              # mu x n
    cdef double* trmu = t_mu_n + mu * n            # mu x mu
    cdef double* acl = trmu + mu * mu              # n x n
    cdef double* aclt = acl + nn
    cdef double* cost = aclt + nn
    cdef double* sigma = cost + nn
    cdef double* p = sigma + nn
    cdef double* d1 = p + nn
    cdef double* d2 = d1 + nn
    cdef double* d3 = d2 + nn
    cdef double* eig = d3 + nn                     # n*n + 2n + lwork
    cdef double rho, j_quad
    cdef int i, j
    cdef cnp.ndarray[cnp.float64_t, ndim=2] grad
    try:
        _mm_nn(mu, pz, n, 1.0, <double*> ktilde.data, <double*> s_dag.data, 0.0, ks)
        memcpy(acl, <double*> a.data, nn * sizeof(double))
        _mm_nn(n, mu, n, 1.0, <double*> b.data, ks, 1.0, acl)
        rho = _rho(acl, n, eig, eig + nn, eig + nn + n, eig + nn + 2 * n, lwork)
        if rho >= 1.0:
            return np.inf, None, float(rho)
        # cost = Qt + ks' R ks
        _mm_nn(mu, mu, n, 1.0, <double*> r.data, ks, 0.0, t_mu_n)
        memcpy(cost, <double*> qtilde.data, nn * sizeof(double))
        _mm_tn(n, mu, n, 1.0, ks, t_mu_n, 1.0, cost)
        _symmetrize(cost, n)
        _dlyap_buf(acl, <double*> sigma_nu.data, sigma, n, DLYAP_TOL, d1, d2, d3)
        for i in range(n):
            for j in range(n):
                aclt[i * n + j] = acl[j * n + i]
        _dlyap_buf(aclt, cost, p, n, DLYAP_TOL, d1, d2, d3)
        # E = 2((R + B'PB) ks + B'PA)
        _mm_tn(mu, n, n, 1.0, <double*> b.data, p, 0.0, bp)          # bp = B'P
        _mm_nn(mu, n, mu, 1.0, bp, <double*> b.data, 0.0, trmu)      # B'PB
        for i in range(mu * mu):
            trmu[i] += (<double*> r.data)[i]
        _mm_nn(mu, mu, n, 1.0, trmu, ks, 0.0, e)                     # (R+B'PB) ks
        _mm_nn(mu, n, n, 1.0, bp, <double*> a.data, 1.0, e)          # += B'PA
        for i in range(mu * n):
            e[i] *= 2.0
        # grad = E Sigma S_dag'
        _mm_nn(mu, n, n, 1.0, e, sigma, 0.0, t_mu_n)
        grad = np.empty((mu, pz))
        _mm_nt(mu, n, pz, 1.0, t_mu_n, <double*> s_dag.data, 0.0, <double*> grad.data)
        j_quad = 0.0
        for i in range(nn):
            j_quad += cost[i] * sigma[i]
        return float(j_quad), grad, float(rho)
    finally:
        free(buf)
