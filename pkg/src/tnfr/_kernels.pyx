# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for small dense matrices and the linear inner loop.

Mirrors ``tnfr._fallback`` function by function.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt, INFINITY

cnp.import_array()

NAME = "cython"


def matmul(double[:, ::1] a, double[:, ::1] b):
    cdef Py_ssize_t n = a.shape[0], k = a.shape[1], m = b.shape[1]
    cdef Py_ssize_t i, j, kk
    cdef double aik
    out = np.zeros((n, m))
    cdef double[:, ::1] o = out
    for i in range(n):
        for kk in range(k):
            aik = a[i, kk]
            if aik != 0.0:
                for j in range(m):
                    o[i, j] += aik * b[kk, j]
    return out


def inverse(double[:, ::1] a):
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t i, j, r, col, piv
    cdef double best, f, tmp, d
    cdef double min_pivot = INFINITY
    aug_arr = np.zeros((n, 2 * n))
    cdef double[:, ::1] aug = aug_arr
    for i in range(n):
        for j in range(n):
            aug[i, j] = a[i, j]
        aug[i, n + i] = 1.0
    for col in range(n):
        piv = col
        best = fabs(aug[col, col])
        for r in range(col + 1, n):
            if fabs(aug[r, col]) > best:
                best = fabs(aug[r, col])
                piv = r
        if best < min_pivot:
            min_pivot = best
        if best == 0.0:
            return np.zeros((n, n)), 0.0
        if piv != col:
            for j in range(2 * n):
                tmp = aug[col, j]
                aug[col, j] = aug[piv, j]
                aug[piv, j] = tmp
        d = aug[col, col]
        for j in range(2 * n):
            aug[col, j] /= d
        for r in range(n):
            if r != col:
                f = aug[r, col]
                if f != 0.0:
                    for j in range(2 * n):
                        aug[r, j] -= f * aug[col, j]
    return np.ascontiguousarray(aug_arr[:, n:]), min_pivot


cdef inline double _sign(double a, double b) nogil:
    return fabs(a) if b >= 0.0 else -fabs(a)


cdef void _balance(double[:, ::1] a, Py_ssize_t n) nogil:
    cdef double radix = 2.0
    cdef double sqrdx = radix * radix
    cdef bint done = False
    cdef Py_ssize_t i, j
    cdef double r, c, g, f, s
    while not done:
        done = True
        for i in range(1, n + 1):
            r = 0.0
            c = 0.0
            for j in range(1, n + 1):
                if j != i:
                    c += fabs(a[j, i])
                    r += fabs(a[i, j])
            if c != 0.0 and r != 0.0:
                g = r / radix
                f = 1.0
                s = c + r
                while c < g:
                    f *= radix
                    c *= sqrdx
                g = r * radix
                while c > g:
                    f /= radix
                    c /= sqrdx
                if (c + r) / f < 0.95 * s:
                    done = False
                    g = 1.0 / f
                    for j in range(1, n + 1):
                        a[i, j] *= g
                    for j in range(1, n + 1):
                        a[j, i] *= f


cdef void _hessenberg(double[:, ::1] a, Py_ssize_t n) nogil:
    cdef Py_ssize_t m, i, j
    cdef double x, y, tmp
    for m in range(2, n):
        x = 0.0
        i = m
        for j in range(m, n + 1):
            if fabs(a[j, m - 1]) > fabs(x):
                x = a[j, m - 1]
                i = j
        if i != m:
            for j in range(m - 1, n + 1):
                tmp = a[i, j]
                a[i, j] = a[m, j]
                a[m, j] = tmp
            for j in range(1, n + 1):
                tmp = a[j, i]
                a[j, i] = a[j, m]
                a[j, m] = tmp
        if x != 0.0:
            for i in range(m + 1, n + 1):
                y = a[i, m - 1]
                if y != 0.0:
                    y /= x
                    a[i, m - 1] = y
                    for j in range(m, n + 1):
                        a[i, j] -= y * a[m, j]
                    for j in range(1, n + 1):
                        a[j, m] += y * a[j, i]
    for i in range(3, n + 1):
        for j in range(1, i - 1):
            a[i, j] = 0.0


cdef int _hqr(double[:, ::1] a, Py_ssize_t n, double[::1] wr, double[::1] wi, int max_its) nogil:
    cdef Py_ssize_t nn, m, l, ll, k, j, i, mmin
    cdef int its
    cdef double z = 0.0, y = 0.0, x = 0.0, w = 0.0, v, u, t, s = 0.0, r = 0.0, q = 0.0, p = 0.0, anorm
    anorm = 0.0
    for i in range(1, n + 1):
        j = i - 1 if i > 1 else 1
        while j <= n:
            anorm += fabs(a[i, j])
            j += 1
    nn = n
    t = 0.0
    while nn >= 1:
        its = 0
        while True:
            l = 1
            ll = nn
            while ll >= 2:
                s = fabs(a[ll - 1, ll - 1]) + fabs(a[ll, ll])
                if s == 0.0:
                    s = anorm
                if fabs(a[ll, ll - 1]) + s == s:
                    a[ll, ll - 1] = 0.0
                    l = ll
                    break
                ll -= 1
            x = a[nn, nn]
            if l == nn:
                wr[nn] = x + t
                wi[nn] = 0.0
                nn -= 1
            else:
                y = a[nn - 1, nn - 1]
                w = a[nn, nn - 1] * a[nn - 1, nn]
                if l == nn - 1:
                    p = 0.5 * (y - x)
                    q = p * p + w
                    z = sqrt(fabs(q))
                    x += t
                    if q >= 0.0:
                        z = p + _sign(z, p)
                        wr[nn - 1] = x + z
                        wr[nn] = x + z
                        if z != 0.0:
                            wr[nn] = x - w / z
                        wi[nn - 1] = 0.0
                        wi[nn] = 0.0
                    else:
                        wr[nn - 1] = x + p
                        wr[nn] = x + p
                        wi[nn - 1] = -z
                        wi[nn] = z
                    nn -= 2
                else:
                    if its == max_its:
                        return -1
                    if its == 10 or its == 20:
                        t += x
                        for i in range(1, nn + 1):
                            a[i, i] -= x
                        s = fabs(a[nn, nn - 1]) + fabs(a[nn - 1, nn - 2])
                        x = 0.75 * s
                        y = x
                        w = -0.4375 * s * s
                    its += 1
                    m = nn - 2
                    while m >= l:
                        z = a[m, m]
                        r = x - z
                        s = y - z
                        p = (r * s - w) / a[m + 1, m] + a[m, m + 1]
                        q = a[m + 1, m + 1] - z - r - s
                        r = a[m + 2, m + 1]
                        s = fabs(p) + fabs(q) + fabs(r)
                        p /= s
                        q /= s
                        r /= s
                        if m == l:
                            break
                        u = fabs(a[m, m - 1]) * (fabs(q) + fabs(r))
                        v = fabs(p) * (fabs(a[m - 1, m - 1]) + fabs(z) + fabs(a[m + 1, m + 1]))
                        if u + v == v:
                            break
                        m -= 1
                    for i in range(m + 2, nn + 1):
                        a[i, i - 2] = 0.0
                        if i != m + 2:
                            a[i, i - 3] = 0.0
                    for k in range(m, nn):
                        if k != m:
                            p = a[k, k - 1]
                            q = a[k + 1, k - 1]
                            r = 0.0
                            if k != nn - 1:
                                r = a[k + 2, k - 1]
                            x = fabs(p) + fabs(q) + fabs(r)
                            if x != 0.0:
                                p /= x
                                q /= x
                                r /= x
                        s = _sign(sqrt(p * p + q * q + r * r), p)
                        if s != 0.0:
                            if k == m:
                                if l != m:
                                    a[k, k - 1] = -a[k, k - 1]
                            else:
                                a[k, k - 1] = -s * x
                            p += s
                            x = p / s
                            y = q / s
                            z = r / s
                            q /= p
                            r /= p
                            for j in range(k, nn + 1):
                                p = a[k, j] + q * a[k + 1, j]
                                if k != nn - 1:
                                    p += r * a[k + 2, j]
                                    a[k + 2, j] -= p * z
                                a[k + 1, j] -= p * y
                                a[k, j] -= p * x
                            mmin = nn if nn < k + 3 else k + 3
                            for i in range(l, mmin + 1):
                                p = x * a[i, k] + y * a[i, k + 1]
                                if k != nn - 1:
                                    p += z * a[i, k + 2]
                                    a[i, k + 2] -= p * r
                                a[i, k + 1] -= p * q
                                a[i, k] -= p
            if nn < 1 or l >= nn - 1:
                break
    return 0


def general_eigvals(double[:, ::1] a, int max_its=30):
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t i, j
    cdef int status
    work_arr = np.zeros((n + 1, n + 1))
    cdef double[:, ::1] work = work_arr
    for i in range(n):
        for j in range(n):
            work[i + 1, j + 1] = a[i, j]
    wr_arr = np.zeros(n + 1)
    wi_arr = np.zeros(n + 1)
    cdef double[::1] wr = wr_arr
    cdef double[::1] wi = wi_arr
    with nogil:
        _balance(work, n)
        _hessenberg(work, n)
        status = _hqr(work, n, wr, wi, max_its)
    return wr_arr[1:].copy(), wi_arr[1:].copy(), status


def symmetric_eigvals(double[:, ::1] a, int max_sweeps=100):
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t p, q, k, sweep
    cdef double off, apq, theta, t, c, s, mkp, mkq, mpk, mqk, scale
    m_arr = np.array(a, dtype=float)
    cdef double[:, ::1] m = m_arr
    scale = 1e-300
    for p in range(n):
        for q in range(n):
            if fabs(m[p, q]) > scale:
                scale = fabs(m[p, q])
    for sweep in range(max_sweeps):
        off = 0.0
        for p in range(n):
            for q in range(p + 1, n):
                off += m[p, q] * m[p, q]
        if sqrt(off) <= 1e-17 * scale:
            return np.diag(m_arr).copy(), 0
        for p in range(n):
            for q in range(p + 1, n):
                apq = m[p, q]
                if fabs(apq) <= 1e-300:
                    continue
                theta = (m[q, q] - m[p, p]) / (2.0 * apq)
                t = _sign(1.0, theta) / (fabs(theta) + sqrt(theta * theta + 1.0))
                c = 1.0 / sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    mkp = m[k, p]
                    mkq = m[k, q]
                    m[k, p] = c * mkp - s * mkq
                    m[k, q] = s * mkp + c * mkq
                for k in range(n):
                    mpk = m[p, k]
                    mqk = m[q, k]
                    m[p, k] = c * mpk - s * mqk
                    m[q, k] = s * mpk + c * mqk
                m[p, q] = 0.0
                m[q, p] = 0.0
    return np.diag(m_arr).copy(), -1


def affine_iterate(double[:, ::1] m, double[::1] v, w_in, double eta, long steps, double bound):
    cdef Py_ssize_t p = m.shape[0]
    cdef Py_ssize_t i, j
    cdef long t
    cdef long hit = -1
    cdef double acc, val
    w_arr = np.array(w_in, dtype=float)
    cdef double[::1] w = w_arr
    g_arr = np.zeros(p)
    cdef double[::1] g = g_arr
    with nogil:
        for t in range(steps):
            for i in range(p):
                acc = -v[i]
                for j in range(p):
                    acc += m[i, j] * w[j]
                g[i] = acc
            for i in range(p):
                val = w[i] - eta * g[i]
                w[i] = val
                if not (fabs(val) <= bound and fabs(val) < INFINITY):
                    hit = t
            if hit >= 0:
                break
    return w_arr, hit
