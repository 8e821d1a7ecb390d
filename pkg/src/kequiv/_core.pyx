# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for Gram construction and streaming Gram products.

Every routine here has a numpy twin in ``kequiv._pykernels`` with the same
signature; ``kequiv._backend`` picks one at import time.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt, pow

cnp.import_array()

cdef enum:
    RBF = 0
    IMQ = 1


cdef inline void _profile(int family, double z, double inv_lam2, double c2, double beta,
                          double* phi, double* d1, double* d2) noexcept nogil:
    # phi(z) with k(x, y) = phi(||x - y||^2), plus first and second derivatives in z
    cdef double e, inv_base, t
    if family == RBF:
        e = exp(-0.5 * z * inv_lam2)
        phi[0] = e
        d1[0] = -0.5 * e * inv_lam2
        d2[0] = 0.25 * e * inv_lam2 * inv_lam2
    else:
        inv_base = 1.0 / (c2 + z * inv_lam2)
        if beta == -0.5:
            t = sqrt(inv_base)
        else:
            t = pow(inv_base, -beta)
        phi[0] = t
        t = t * inv_base * inv_lam2
        d1[0] = beta * t
        d2[0] = beta * (beta - 1.0) * t * inv_base * inv_lam2


cdef inline double _stein_pair(int family, const double* x, const double* y,
                               const double* sx, const double* sy, Py_ssize_t d,
                               double inv_lam2, double c2, double beta) noexcept nogil:
    cdef Py_ssize_t k
    cdef double z = 0.0, ss = 0.0, sr = 0.0, r
    cdef double phi, d1, d2
    for k in range(d):
        r = x[k] - y[k]
        z += r * r
        ss += sx[k] * sy[k]
        sr += (sy[k] - sx[k]) * r
    _profile(family, z, inv_lam2, c2, beta, &phi, &d1, &d2)
    return phi * ss + 2.0 * d1 * sr - 4.0 * d2 * z - 2.0 * d * d1


cdef inline double _kernel_pair(int family, const double* x, const double* y, Py_ssize_t d,
                                double inv_lam2, double c2, double beta) noexcept nogil:
    cdef Py_ssize_t k
    cdef double z = 0.0, r
    cdef double phi, d1, d2
    for k in range(d):
        r = x[k] - y[k]
        z += r * r
    if family == RBF:
        return exp(-0.5 * z * inv_lam2)
    _profile(family, z, inv_lam2, c2, beta, &phi, &d1, &d2)
    return phi


cdef void _stein_row(int family, const double* XT, const double* ST, Py_ssize_t n, Py_ssize_t d,
                     Py_ssize_t i, Py_ssize_t lo, Py_ssize_t hi, double inv_lam2, double c2,
                     double beta, double* z, double* ss, double* sr) noexcept nogil:
    # fills z[0:hi-lo] with u_p(x_i, x_j) for j in [lo, hi); ss and sr are scratch
    cdef Py_ssize_t j, k, w = hi - lo
    cdef double xi, si, r, e, t, ib, d1, d2
    cdef double dd = <double>d
    cdef const double* xk
    cdef const double* sk
    for j in range(w):
        z[j] = 0.0
        ss[j] = 0.0
        sr[j] = 0.0
    for k in range(d):
        xi = XT[k * n + i]
        si = ST[k * n + i]
        xk = XT + k * n + lo
        sk = ST + k * n + lo
        for j in range(w):
            r = xi - xk[j]
            z[j] += r * r
            ss[j] += si * sk[j]
            sr[j] += (sk[j] - si) * r
    if family == RBF:
        for j in range(w):
            e = exp(-0.5 * z[j] * inv_lam2)
            d1 = -0.5 * e * inv_lam2
            d2 = 0.25 * e * inv_lam2 * inv_lam2
            z[j] = e * ss[j] + 2.0 * d1 * sr[j] - 4.0 * d2 * z[j] - 2.0 * dd * d1
    elif beta == -0.5:
        for j in range(w):
            ib = 1.0 / (c2 + z[j] * inv_lam2)
            t = sqrt(ib)
            d1 = -0.5 * t * ib * inv_lam2
            d2 = 0.75 * t * ib * ib * inv_lam2 * inv_lam2
            z[j] = t * ss[j] + 2.0 * d1 * sr[j] - 4.0 * d2 * z[j] - 2.0 * dd * d1
    else:
        for j in range(w):
            ib = 1.0 / (c2 + z[j] * inv_lam2)
            t = pow(ib, -beta)
            d1 = beta * t * ib * inv_lam2
            d2 = (beta - 1.0) * d1 * ib * inv_lam2
            z[j] = t * ss[j] + 2.0 * d1 * sr[j] - 4.0 * d2 * z[j] - 2.0 * dd * d1


cdef void _kernel_row(int family, const double* XT, const double* YT, Py_ssize_t n,
                      Py_ssize_t m, Py_ssize_t d, Py_ssize_t i, Py_ssize_t lo, Py_ssize_t hi,
                      double inv_lam2, double c2, double beta, double* z) noexcept nogil:
    # fills z[0:hi-lo] with k(x_i, y_j) for j in [lo, hi); XT is d x n, YT is d x m
    cdef Py_ssize_t j, k, w = hi - lo
    cdef double xi, r
    cdef const double* yk
    for j in range(w):
        z[j] = 0.0
    for k in range(d):
        xi = XT[k * n + i]
        yk = YT + k * m + lo
        for j in range(w):
            r = xi - yk[j]
            z[j] += r * r
    if family == RBF:
        for j in range(w):
            z[j] = exp(-0.5 * z[j] * inv_lam2)
    elif beta == -0.5:
        for j in range(w):
            z[j] = sqrt(1.0 / (c2 + z[j] * inv_lam2))
    else:
        for j in range(w):
            z[j] = pow(1.0 / (c2 + z[j] * inv_lam2), -beta)


cdef Py_ssize_t DEF_CHUNK = 512


def gram(const double[:, ::1] X, const double[:, ::1] Y, int family,
         double lam2, double c2, double beta):
    cdef Py_ssize_t n = X.shape[0], m = Y.shape[0], d = X.shape[1], i
    cdef double inv_lam2 = 1.0 / lam2
    out = np.empty((n, m), dtype=np.float64)
    if n == 0 or m == 0:
        return out
    cdef double[:, ::1] K = out
    cdef double[:, ::1] XT = np.ascontiguousarray(np.asarray(X).T)
    cdef double[:, ::1] YT = np.ascontiguousarray(np.asarray(Y).T)
    with nogil:
        for i in range(n):
            _kernel_row(family, &XT[0, 0], &YT[0, 0], n, m, d, i, 0, m, inv_lam2, c2, beta,
                        &K[i, 0])
    return out


def stein_gram(const double[:, ::1] X, const double[:, ::1] S, int family,
               double lam2, double c2, double beta):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], i, j
    cdef double inv_lam2 = 1.0 / lam2
    out = np.empty((n, n), dtype=np.float64)
    if n == 0:
        return out
    cdef double[:, ::1] U = out
    cdef double[:, ::1] XT = np.ascontiguousarray(np.asarray(X).T)
    cdef double[:, ::1] ST = np.ascontiguousarray(np.asarray(S).T)
    cdef double[:, ::1] buf = np.empty((2, n), dtype=np.float64)
    with nogil:
        for i in range(n):
            _stein_row(family, &XT[0, 0], &ST[0, 0], n, d, i, i, n, inv_lam2, c2, beta,
                       &U[i, i], &buf[0, 0], &buf[1, 0])
            for j in range(i + 1, n):
                U[j, i] = U[i, j]
    return out


def stein_matmat(const double[:, ::1] X, const double[:, ::1] S, const double[:, ::1] V,
                 int family, double lam2, double c2, double beta):
    """Return ``U @ V`` for the Stein Gram ``U`` without storing ``U``."""
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], r = V.shape[1], i, j, c, lo, hi
    cdef double u, acc, vi, inv_lam2 = 1.0 / lam2
    cdef Py_ssize_t chunk = DEF_CHUNK
    out = np.zeros((n, r), dtype=np.float64)
    if n == 0 or r == 0:
        return out
    cdef double[:, ::1] O = out
    cdef double[:, ::1] XT = np.ascontiguousarray(np.asarray(X).T)
    cdef double[:, ::1] ST = np.ascontiguousarray(np.asarray(S).T)
    cdef double[:, ::1] buf = np.empty((3, chunk), dtype=np.float64)
    cdef double* z = &buf[0, 0]
    cdef double* ss = &buf[1, 0]
    cdef double* sr = &buf[2, 0]
    cdef const double* vp = &V[0, 0]
    cdef double* op = &O[0, 0]
    with nogil:
        for i in range(n):
            # the diagonal term is the first entry of the first chunk
            vi = vp[i] if r == 1 else 0.0
            acc = 0.0
            lo = i
            while lo < n:
                hi = min(lo + chunk, n)
                _stein_row(family, &XT[0, 0], &ST[0, 0], n, d, i, lo, hi, inv_lam2, c2, beta,
                           z, ss, sr)
                if r == 1:
                    if lo == i:
                        acc += z[0] * vi
                        for j in range(1, hi - lo):
                            acc += z[j] * vp[lo + j]
                            op[lo + j] += z[j] * vi
                    else:
                        for j in range(hi - lo):
                            acc += z[j] * vp[lo + j]
                            op[lo + j] += z[j] * vi
                else:
                    for j in range(hi - lo):
                        u = z[j]
                        if lo + j == i:
                            for c in range(r):
                                op[i * r + c] += u * vp[i * r + c]
                        else:
                            for c in range(r):
                                op[i * r + c] += u * vp[(lo + j) * r + c]
                                op[(lo + j) * r + c] += u * vp[i * r + c]
                lo = hi
            if r == 1:
                op[i] += acc
    return out


def gram_matmat(const double[:, ::1] X, const double[:, ::1] Y, const double[:, ::1] V,
                int family, double lam2, double c2, double beta, bint symmetric):
    """Return ``K(X, Y) @ V`` without storing the Gram matrix.

    With ``symmetric`` set, ``Y`` must be ``X`` and only the upper triangle
    is evaluated.
    """
    cdef Py_ssize_t n = X.shape[0], m = Y.shape[0], d = X.shape[1], r = V.shape[1]
    cdef Py_ssize_t i, j, c, lo, hi, jj
    cdef double k, acc, vi, inv_lam2 = 1.0 / lam2
    cdef Py_ssize_t chunk = DEF_CHUNK
    out = np.zeros((n, r), dtype=np.float64)
    if n == 0 or m == 0 or r == 0:
        return out
    cdef double[:, ::1] O = out
    cdef double[:, ::1] XT = np.ascontiguousarray(np.asarray(X).T)
    cdef double[:, ::1] YT = np.ascontiguousarray(np.asarray(Y).T)
    cdef double[::1] buf = np.empty(chunk, dtype=np.float64)
    cdef double* z = &buf[0]
    cdef const double* vp = &V[0, 0]
    cdef double* op = &O[0, 0]
    with nogil:
        for i in range(n):
            vi = vp[i] if (symmetric and r == 1) else 0.0
            acc = 0.0
            lo = i if symmetric else 0
            while lo < m:
                hi = min(lo + chunk, m)
                _kernel_row(family, &XT[0, 0], &YT[0, 0], n, m, d, i, lo, hi, inv_lam2, c2,
                            beta, z)
                if r == 1 and not symmetric:
                    for j in range(hi - lo):
                        acc += z[j] * vp[lo + j]
                elif r == 1:
                    if lo == i:
                        acc += z[0] * vi
                        for j in range(1, hi - lo):
                            acc += z[j] * vp[lo + j]
                            op[lo + j] += z[j] * vi
                    else:
                        for j in range(hi - lo):
                            acc += z[j] * vp[lo + j]
                            op[lo + j] += z[j] * vi
                else:
                    for j in range(hi - lo):
                        k = z[j]
                        jj = lo + j
                        if symmetric and jj == i:
                            for c in range(r):
                                op[i * r + c] += k * vp[i * r + c]
                        elif symmetric:
                            for c in range(r):
                                op[i * r + c] += k * vp[jj * r + c]
                                op[jj * r + c] += k * vp[i * r + c]
                        else:
                            for c in range(r):
                                op[i * r + c] += k * vp[jj * r + c]
                lo = hi
            if r == 1:
                op[i] += acc
    return out


def gram_row_col_sums(const double[:, ::1] X, const double[:, ::1] Y, int family,
                      double lam2, double c2, double beta):
    """Row and column sums of ``K(X, Y)`` in one streaming pass."""
    cdef Py_ssize_t n = X.shape[0], m = Y.shape[0], d = X.shape[1], i, j, lo, hi
    cdef double acc, inv_lam2 = 1.0 / lam2
    cdef Py_ssize_t chunk = DEF_CHUNK
    rows = np.zeros(n, dtype=np.float64)
    cols = np.zeros(m, dtype=np.float64)
    if n == 0 or m == 0:
        return rows, cols
    cdef double[::1] R = rows
    cdef double[::1] C = cols
    cdef double[:, ::1] XT = np.ascontiguousarray(np.asarray(X).T)
    cdef double[:, ::1] YT = np.ascontiguousarray(np.asarray(Y).T)
    cdef double[::1] buf = np.empty(chunk, dtype=np.float64)
    cdef double* z = &buf[0]
    cdef double* cp = &C[0]
    with nogil:
        for i in range(n):
            acc = 0.0
            lo = 0
            while lo < m:
                hi = min(lo + chunk, m)
                _kernel_row(family, &XT[0, 0], &YT[0, 0], n, m, d, i, lo, hi, inv_lam2, c2,
                            beta, z)
                for j in range(hi - lo):
                    acc += z[j]
                    cp[lo + j] += z[j]
                lo = hi
            R[i] = acc
    return rows, cols
