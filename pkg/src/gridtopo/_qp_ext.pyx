# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# cython: language_level=3
"""Compiled accelerated projected gradient; mirrors ``_qp_py.apg``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fmax, fmin
from libc.stdlib cimport qsort, malloc, free

cnp.import_array()


cdef int _cmp_desc(const void* a, const void* b) noexcept nogil:
    cdef double x = (<double*>a)[0]
    cdef double y = (<double*>b)[0]
    if x < y:
        return 1
    if x > y:
        return -1
    return 0


cdef void _proj_simplex(const double* z, double* out, int n, double* work) noexcept nogil:
    cdef int k
    cdef double s = 0.0, css = 0.0, lam = 0.0
    for k in range(n):
        out[k] = fmax(z[k], 0.0)
        s += out[k]
    if s <= 1.0:
        return
    for k in range(n):
        work[k] = z[k]
    qsort(work, n, sizeof(double), _cmp_desc)
    for k in range(n):
        css += work[k]
        if work[k] - (css - 1.0) / (k + 1) > 0:
            lam = (css - 1.0) / (k + 1)
    for k in range(n):
        out[k] = fmax(z[k] - lam, 0.0)


cdef void _proj_box_zero_sum(const double* z, double* out, int n) noexcept nogil:
    cdef int k, it, nfree, nup, nlo
    cdef double lo, hi, mid, s, w, lam, zf
    if n == 0:
        return
    lo = z[0]
    hi = z[0]
    for k in range(n):
        lo = fmin(lo, z[k])
        hi = fmax(hi, z[k])
    lo -= 1.0
    hi += 1.0
    for it in range(100):
        mid = 0.5 * (lo + hi)
        s = 0.0
        for k in range(n):
            s += fmin(fmax(z[k] - mid, -1.0), 1.0)
        if s > 0:
            lo = mid
        else:
            hi = mid
    lam = 0.5 * (lo + hi)
    nfree = 0
    nup = 0
    nlo = 0
    zf = 0.0
    for k in range(n):
        w = z[k] - lam
        if w >= 1.0:
            nup += 1
        elif w <= -1.0:
            nlo += 1
        else:
            nfree += 1
            zf += z[k]
    if nfree > 0:
        lam = (zf + nup - nlo) / nfree
    for k in range(n):
        out[k] = fmin(fmax(z[k] - lam, -1.0), 1.0)


cdef void _project(const double* z, double* out, int n, int ns, double* work) noexcept nogil:
    _proj_simplex(z, out, ns, work)
    _proj_box_zero_sum(z + ns, out + ns, n - ns)


cdef void _matvec(const double* Q, const double* x, double* out, int n) noexcept nogil:
    cdef int r, k
    cdef double s
    for r in range(n):
        s = 0.0
        for k in range(n):
            s += Q[r * n + k] * x[k]
        out[r] = s


cdef double _obj(const double* x, const double* Qx, const double* c, int n) noexcept nogil:
    cdef int k
    cdef double s = 0.0
    for k in range(n):
        s += x[k] * (Qx[k] - 2.0 * c[k])
    return s


def project(z, int ns):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] zz = np.ascontiguousarray(z, dtype=np.float64)
    cdef int n = zz.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] work = np.empty(max(n, 1))
    _project(&zz[0] if n else NULL, &out[0] if n else NULL, n, ns, &work[0])
    return out


def apg(Q, c, int ns, x0, double L, double tol, int max_iter):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] QQ = np.ascontiguousarray(Q, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] cc = np.ascontiguousarray(c, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xin = np.ascontiguousarray(x0, dtype=np.float64)
    cdef int n = cc.shape[0]
    if n == 0:
        return np.zeros(0), 0, 0.0
    cdef double* buf = <double*>malloc(9 * n * sizeof(double))
    cdef double* x = buf
    cdef double* Qx = buf + n
    cdef double* y = buf + 2 * n
    cdef double* Qy = buf + 3 * n
    cdef double* xn = buf + 4 * n
    cdef double* Qxn = buf + 5 * n
    cdef double* tmp = buf + 6 * n
    cdef double* tmp2 = buf + 7 * n
    cdef double* work = buf + 8 * n
    cdef const double* Qp = &QQ[0, 0]
    cdef const double* cp = &cc[0]
    cdef double fx, fn, t = 1.0, tn, mom, pg = 1e300, d
    cdef int k, it = 0
    cdef cnp.ndarray[cnp.float64_t, ndim=1] result = np.empty(n)
    with nogil:
        _project(&xin[0], x, n, ns, work)
        _matvec(Qp, x, Qx, n)
        fx = _obj(x, Qx, cp, n)
        for k in range(n):
            y[k] = x[k]
            Qy[k] = Qx[k]
        while it < max_iter:
            it += 1
            for k in range(n):
                tmp[k] = y[k] - 2.0 * (Qy[k] - cp[k]) / L
            _project(tmp, xn, n, ns, work)
            _matvec(Qp, xn, Qxn, n)
            fn = _obj(xn, Qxn, cp, n)
            if fn > fx:
                t = 1.0
                for k in range(n):
                    tmp[k] = x[k] - 2.0 * (Qx[k] - cp[k]) / L
                _project(tmp, xn, n, ns, work)
                _matvec(Qp, xn, Qxn, n)
                fn = _obj(xn, Qxn, cp, n)
            for k in range(n):
                tmp[k] = xn[k] - 2.0 * (Qxn[k] - cp[k]) / L
            _project(tmp, tmp2, n, ns, work)
            pg = 0.0
            for k in range(n):
                d = xn[k] - tmp2[k]
                pg += d * d
            pg = L * sqrt(pg)
            tn = 0.5 * (1.0 + sqrt(1.0 + 4.0 * t * t))
            mom = (t - 1.0) / tn
            for k in range(n):
                y[k] = xn[k] + mom * (xn[k] - x[k])
                Qy[k] = Qxn[k] + mom * (Qxn[k] - Qx[k])
                x[k] = xn[k]
                Qx[k] = Qxn[k]
            fx = fn
            t = tn
            if pg <= tol:
                break
        for k in range(n):
            result[k] = x[k]
    free(buf)
    return result, it, pg
