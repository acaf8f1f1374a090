# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot loops; semantics match ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, floor

cnp.import_array()

DEF MAX_STEPS = 10000


def reduce_batch(mats):
    cdef cnp.ndarray[cnp.float64_t, ndim=3] k = np.array(mats, dtype=np.float64, copy=True).reshape(-1, 2, 2)
    cdef Py_ssize_t n = k.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=3] gam = np.zeros((n, 2, 2), dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] steps = np.zeros(n, dtype=np.int64)
    cdef Py_ssize_t j
    cdef int s
    cdef double a, b, c, d, den, x, m, num
    cdef long long g00, g01, g10, g11, mi, t0, t1
    for j in range(n):
        a = k[j, 0, 0]; b = k[j, 0, 1]; c = k[j, 1, 0]; d = k[j, 1, 1]
        g00 = 1; g01 = 0; g10 = 0; g11 = 1
        for s in range(MAX_STEPS):
            den = c * c + d * d
            x = (a * c + b * d) / den
            m = floor(x + 0.5) if fabs(x) > 0.5 else 0.0
            a -= m * c
            b -= m * d
            mi = <long long> m
            g00 -= mi * g10
            g01 -= mi * g11
            num = a * a + b * b
            steps[j] += 1
            if num < den * (1 - 1e-14):
                t0 = g00; t1 = g01
                g00 = -g10; g01 = -g11
                g10 = t0; g11 = t1
                x = a; m = b
                a = -c; b = -d
                c = x; d = m
            else:
                break
        else:
            raise RuntimeError("fundamental-domain reduction did not terminate")
        k[j, 0, 0] = a; k[j, 0, 1] = b; k[j, 1, 0] = c; k[j, 1, 1] = d
        gam[j, 0, 0] = g00; gam[j, 0, 1] = g01; gam[j, 1, 0] = g10; gam[j, 1, 1] = g11
    return k, gam, steps


cdef long long _pmod(long long x, long long q):
    cdef long long r = x % q
    return r + q if r < 0 else r


cdef long long _inv(long long u, long long q):
    cdef long long t = 0, newt = 1, r = q, newr = _pmod(u, q), quo, tmp
    while newr != 0:
        quo = r // newr
        tmp = t - quo * newt; t = newt; newt = tmp
        tmp = r - quo * newr; r = newr; newr = tmp
    return _pmod(t, q)


cdef int _val(long long x, long long p, int cap):
    cdef int v = 0
    if x == 0:
        return cap
    while x % p == 0 and v < cap:
        x //= p
        v += 1
    return v


def hecke_batch(k, long long p, int i):
    cdef cnp.ndarray[cnp.int64_t, ndim=3] kk = np.asarray(k, dtype=np.int64).reshape(-1, 2, 2)
    cdef Py_ssize_t n = kk.shape[0], j
    cdef cnp.ndarray[cnp.int64_t, ndim=1] A = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] num = np.zeros(n, dtype=np.int64)
    cdef int cap = 2 * i + 1, va, vc, w, e
    cdef long long a, b, c, q = 1, pe, pw, unit
    cdef int t
    for t in range(2 * i):
        q *= p
    for j in range(n):
        a = kk[j, 0, 0]; b = kk[j, 0, 1]; c = kk[j, 1, 0]
        va = _val(a, p, cap)
        vc = _val(c, p, cap) + 2 * i
        w = va if va < vc else vc
        A[j] = i - w
        e = 2 * i - w
        if va == w and e > 0:
            pw = 1
            for t in range(w):
                pw *= p
            pe = 1
            for t in range(e):
                pe *= p
            unit = _pmod(a // pw, q)
            num[j] = _pmod(_pmod(-b, q) * _inv(unit, q), pe)
    return A, num
