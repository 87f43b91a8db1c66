"""Dense nonsymmetric eigenvalues: balance, Householder Hessenberg, Francis QR.

All three routines work in place on a float64 C-contiguous square array.
Row/column updates are expressed as slice arithmetic so the plain numpy
fallback stays usable at a few hundred rows.
"""

import numpy as np

from .._accel import njit

EPS = np.finfo(np.float64).eps


@njit
def balance(a):
    """Diagonal similarity scaling by powers of two (row/column norm balancing)."""
    n = a.shape[0]
    radix = 2.0
    sqrdx = radix * radix
    done = False
    while not done:
        done = True
        for i in range(n):
            c = np.sum(np.abs(a[:, i])) - abs(a[i, i])
            r = np.sum(np.abs(a[i, :])) - abs(a[i, i])
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
                    a[i, :] *= 1.0 / f
                    a[:, i] *= f


@njit
def hessenberg(a):
    """Reduce to upper Hessenberg form by Householder reflections."""
    n = a.shape[0]
    for k in range(n - 2):
        v = a[k + 1:, k].copy()
        alpha = np.sqrt(np.sum(v * v))
        if alpha == 0.0:
            continue
        if v[0] > 0.0:
            alpha = -alpha
        v[0] -= alpha
        vv = np.sum(v * v)
        if vv == 0.0:
            continue
        beta = 2.0 / vv
        # left: rows k+1.., columns k..
        blk = a[k + 1:, k:]
        w = beta * (v @ np.ascontiguousarray(blk))
        for i in range(v.shape[0]):
            blk[i, :] -= v[i] * w
        # right: all rows, columns k+1..
        blk = a[:, k + 1:]
        w = beta * (np.ascontiguousarray(blk) @ v)
        for i in range(n):
            blk[i, :] -= w[i] * v
        a[k + 2:, k] = 0.0


@njit
def hqr(a, max_iter):
    """Eigenvalues of an upper Hessenberg matrix by Francis double-shift QR.

    Returns ``(wr, wi, ok)``; ``ok`` is False when the total iteration
    count exceeds ``max_iter``.  ``a`` is destroyed.
    """
    n = a.shape[0]
    wr = np.zeros(n)
    wi = np.zeros(n)
    anorm = 0.0
    for i in range(n):
        for j in range(max(i - 1, 0), n):
            anorm += abs(a[i, j])
    nn = n - 1
    t = 0.0
    total = 0
    x = 0.0
    y = 0.0
    z = 0.0
    w = 0.0
    p = 0.0
    q = 0.0
    r = 0.0
    s = 0.0
    while nn >= 0:
        its = 0
        while True:
            # look for a single small subdiagonal element
            l = 0
            for ll in range(nn, 0, -1):
                s = abs(a[ll - 1, ll - 1]) + abs(a[ll, ll])
                if s == 0.0:
                    s = anorm
                if abs(a[ll, ll - 1]) <= EPS * s:
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
                    z = np.sqrt(abs(q))
                    x += t
                    if q >= 0.0:
                        z = p + (z if p >= 0.0 else -z)
                        wr[nn - 1] = x + z
                        wr[nn] = x + z
                        if z != 0.0:
                            wr[nn] = x - w / z
                        wi[nn - 1] = 0.0
                        wi[nn] = 0.0
                    else:
                        wr[nn - 1] = x + p
                        wr[nn] = x + p
                        wi[nn - 1] = z
                        wi[nn] = -z
                    nn -= 2
                else:
                    if total >= max_iter:
                        return wr, wi, False
                    if its > 0 and its % 10 == 0:
                        # exceptional shift
                        t += x
                        for i in range(nn + 1):
                            a[i, i] -= x
                        s = abs(a[nn, nn - 1]) + abs(a[nn - 1, nn - 2])
                        x = 0.75 * s
                        y = x
                        w = -0.4375 * s * s
                    its += 1
                    total += 1
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
                        if u <= EPS * v:
                            break
                        m -= 1
                    for i in range(m, nn - 1):
                        a[i + 2, i] = 0.0
                        if i != m:
                            a[i + 2, i - 1] = 0.0
                    for k in range(m, nn):
                        if k != m:
                            p = a[k, k - 1]
                            q = a[k + 1, k - 1]
                            r = 0.0
                            if k + 1 != nn:
                                r = a[k + 2, k - 1]
                            x = abs(p) + abs(q) + abs(r)
                            if x != 0.0:
                                p /= x
                                q /= x
                                r /= x
                        s = np.sqrt(p * p + q * q + r * r)
                        if p < 0.0:
                            s = -s
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
                            # row transformation
                            if k + 1 != nn:
                                rowp = a[k, k:nn + 1] + q * a[k + 1, k:nn + 1] + r * a[k + 2, k:nn + 1]
                                a[k + 2, k:nn + 1] -= rowp * z
                            else:
                                rowp = a[k, k:nn + 1] + q * a[k + 1, k:nn + 1]
                            a[k + 1, k:nn + 1] -= rowp * y
                            a[k, k:nn + 1] -= rowp * x
                            # column transformation
                            mmin = nn if nn < k + 3 else k + 3
                            if k + 1 != nn:
                                colp = x * a[l:mmin + 1, k] + y * a[l:mmin + 1, k + 1] + z * a[l:mmin + 1, k + 2]
                                a[l:mmin + 1, k + 2] -= colp * r
                            else:
                                colp = x * a[l:mmin + 1, k] + y * a[l:mmin + 1, k + 1]
                            a[l:mmin + 1, k + 1] -= colp * q
                            a[l:mmin + 1, k] -= colp
            if not (l < nn - 1):
                break
    return wr, wi, True


@njit
def eigvals_dense(a, max_iter):
    """Balance, reduce and iterate; ``a`` is a private copy."""
    balance(a)
    hessenberg(a)
    return hqr(a, max_iter)
