"""Pure-Python kernels.

Same algorithms and call signatures as the compiled ``_kernels`` extension.
Used when the extension is not built, or when ``TNFR_PURE_PYTHON=1``.
"""
from __future__ import annotations

import math

import numpy as np

NAME = "python"


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n, k = a.shape
    m = b.shape[1]
    out = np.zeros((n, m))
    for i in range(n):
        row = a[i]
        for kk in range(k):
            aik = row[kk]
            if aik != 0.0:
                out[i] += aik * b[kk]
    return out


def inverse(a: np.ndarray) -> tuple[np.ndarray, float]:
    """Gauss-Jordan with partial pivoting.

    Returns ``(inverse, smallest_pivot_magnitude)``.  A zero pivot yields a
    zero matrix and pivot ``0.0``; the caller decides what to raise.
    """
    n = a.shape[0]
    aug = np.zeros((n, 2 * n))
    aug[:, :n] = a
    for i in range(n):
        aug[i, n + i] = 1.0
    min_pivot = math.inf
    for col in range(n):
        piv = col
        best = abs(aug[col, col])
        for r in range(col + 1, n):
            if abs(aug[r, col]) > best:
                best = abs(aug[r, col])
                piv = r
        min_pivot = min(min_pivot, best)
        if best == 0.0:
            return np.zeros((n, n)), 0.0
        if piv != col:
            aug[[col, piv]] = aug[[piv, col]]
        aug[col] /= aug[col, col]
        for r in range(n):
            if r != col:
                f = aug[r, col]
                if f != 0.0:
                    aug[r] -= f * aug[col]
    return aug[:, n:].copy(), float(min_pivot)


def _balance(a: np.ndarray, n: int) -> None:
    radix = 2.0
    sqrdx = radix * radix
    done = False
    while not done:
        done = True
        for i in range(1, n + 1):
            r = c = 0.0
            for j in range(1, n + 1):
                if j != i:
                    c += abs(a[j, i])
                    r += abs(a[i, j])
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
                    a[i, 1:] *= g
                    a[1:, i] *= f


def _hessenberg(a: np.ndarray, n: int) -> None:
    # elimination with pivoting; 1-based storage
    for m in range(2, n):
        x = 0.0
        i = m
        for j in range(m, n + 1):
            if abs(a[j, m - 1]) > abs(x):
                x = a[j, m - 1]
                i = j
        if i != m:
            for j in range(m - 1, n + 1):
                a[i, j], a[m, j] = a[m, j], a[i, j]
            for j in range(1, n + 1):
                a[j, i], a[j, m] = a[j, m], a[j, i]
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


def _sign(a: float, b: float) -> float:
    return abs(a) if b >= 0.0 else -abs(a)


def _hqr(a: np.ndarray, n: int, wr: np.ndarray, wi: np.ndarray, max_its: int) -> int:
    anorm = 0.0
    for i in range(1, n + 1):
        for j in range(max(i - 1, 1), n + 1):
            anorm += abs(a[i, j])
    nn = n
    t = 0.0
    p = q = r = s = w = x = y = z = 0.0
    while nn >= 1:
        its = 0
        while True:
            l = 1
            for ll in range(nn, 1, -1):
                s = abs(a[ll - 1, ll - 1]) + abs(a[ll, ll])
                if s == 0.0:
                    s = anorm
                if abs(a[ll, ll - 1]) + s == s:
                    a[ll, ll - 1] = 0.0
                    l = ll
                    break
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
                    z = math.sqrt(abs(q))
                    x += t
                    if q >= 0.0:
                        z = p + _sign(z, p)
                        wr[nn - 1] = wr[nn] = x + z
                        if z != 0.0:
                            wr[nn] = x - w / z
                        wi[nn - 1] = wi[nn] = 0.0
                    else:
                        wr[nn - 1] = wr[nn] = x + p
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
                        s = abs(a[nn, nn - 1]) + abs(a[nn - 1, nn - 2])
                        y = x = 0.75 * s
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
                        s = abs(p) + abs(q) + abs(r)
                        p /= s
                        q /= s
                        r /= s
                        if m == l:
                            break
                        u = abs(a[m, m - 1]) * (abs(q) + abs(r))
                        v = abs(p) * (abs(a[m - 1, m - 1]) + abs(z) + abs(a[m + 1, m + 1]))
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
                            x = abs(p) + abs(q) + abs(r)
                            if x != 0.0:
                                p /= x
                                q /= x
                                r /= x
                        s = _sign(math.sqrt(p * p + q * q + r * r), p)
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


def general_eigvals(a: np.ndarray, max_its: int = 30) -> tuple[np.ndarray, np.ndarray, int]:
    """Balance, reduce to Hessenberg form, then shifted QR.

    Returns ``(real_parts, imag_parts, status)``; status ``-1`` means the QR
    sweep hit ``max_its`` on some eigenvalue.
    """
    n = a.shape[0]
    work = np.zeros((n + 1, n + 1))
    work[1:, 1:] = a
    _balance(work, n)
    _hessenberg(work, n)
    wr = np.zeros(n + 1)
    wi = np.zeros(n + 1)
    status = _hqr(work, n, wr, wi, max_its)
    return wr[1:].copy(), wi[1:].copy(), status


def symmetric_eigvals(a: np.ndarray, max_sweeps: int = 100) -> tuple[np.ndarray, int]:
    """Cyclic Jacobi rotations; returns ``(eigenvalues, status)``."""
    n = a.shape[0]
    m = np.array(a, dtype=float)
    scale = max(float(np.max(np.abs(m))), 1e-300)
    for _ in range(max_sweeps):
        off = 0.0
        for p in range(n):
            for q in range(p + 1, n):
                off += m[p, q] * m[p, q]
        if math.sqrt(off) <= 1e-17 * scale:
            return np.diag(m).copy(), 0
        for p in range(n):
            for q in range(p + 1, n):
                apq = m[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (m[q, q] - m[p, p]) / (2.0 * apq)
                t = _sign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
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
                m[p, q] = m[q, p] = 0.0
    return np.diag(m).copy(), -1


def affine_iterate(
    m: np.ndarray, v: np.ndarray, w: np.ndarray, eta: float, steps: int, bound: float
) -> tuple[np.ndarray, int]:
    """Run ``w <- w - eta * (m @ w - v)`` for ``steps`` steps.

    Returns the final iterate and the 0-based step at which ``max|w|``
    exceeded ``bound`` or became non-finite, else ``-1``.
    """
    w = np.array(w, dtype=float)
    for t in range(steps):
        w = w - eta * (m @ w - v)
        peak = float(np.max(np.abs(w)))
        if not (peak <= bound and peak < math.inf):
            return w, t
    return w, -1
