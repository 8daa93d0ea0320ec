"""Hot inner loops: Hessenberg reduction, Francis double-shift QR, all-pairs BFS.

Every kernel has two implementations with identical signatures: a numba
``@njit`` version and a pure-numpy version.  The numba path is used when numba
imports and ``SWAN_LAB_DISABLE_NUMBA`` is unset (or ``0``).  Both paths are
exported under the ``*_numba`` / ``*_numpy`` names so the benchmark and the
tests can compare them directly.
"""

import math
import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is the optional "fast" extra
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


def _flag_disabled():
    return os.environ.get("SWAN_LAB_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")


USE_NUMBA = HAVE_NUMBA and not _flag_disabled()

# hqr status codes
HQR_OK = -1


# ---------------------------------------------------------------------------
# Hessenberg reduction (Householder), in place on a C-contiguous float64 array
# ---------------------------------------------------------------------------

@njit(cache=True)
def hessenberg_numba(a):
    n = a.shape[0]
    v = np.empty(n)
    for k in range(n - 2):
        m = n - k - 1
        norm = 0.0
        for i in range(m):
            v[i] = a[k + 1 + i, k]
            norm += v[i] * v[i]
        norm = math.sqrt(norm)
        if norm == 0.0:
            continue
        alpha = -norm if v[0] >= 0.0 else norm
        v[0] -= alpha
        vnorm = 0.0
        for i in range(m):
            vnorm += v[i] * v[i]
        vnorm = math.sqrt(vnorm)
        if vnorm == 0.0:
            continue
        for i in range(m):
            v[i] /= vnorm
        # left: rows k+1.., cols k..
        for j in range(k, n):
            s = 0.0
            for i in range(m):
                s += v[i] * a[k + 1 + i, j]
            s *= 2.0
            for i in range(m):
                a[k + 1 + i, j] -= s * v[i]
        # right: all rows, cols k+1..
        for i in range(n):
            s = 0.0
            for j in range(m):
                s += a[i, k + 1 + j] * v[j]
            s *= 2.0
            for j in range(m):
                a[i, k + 1 + j] -= s * v[j]
        for i in range(k + 2, n):
            a[i, k] = 0.0
    return a


def hessenberg_numpy(a):
    n = a.shape[0]
    for k in range(n - 2):
        x = a[k + 1:, k].copy()
        norm = np.sqrt(x @ x)
        if norm == 0.0:
            continue
        alpha = -norm if x[0] >= 0.0 else norm
        x[0] -= alpha
        vnorm = np.sqrt(x @ x)
        if vnorm == 0.0:
            continue
        v = x / vnorm
        a[k + 1:, k:] -= 2.0 * np.outer(v, v @ a[k + 1:, k:])
        a[:, k + 1:] -= 2.0 * np.outer(a[:, k + 1:] @ v, v)
        a[k + 2:, k] = 0.0
    return a


# ---------------------------------------------------------------------------
# Eigenvalues of an upper Hessenberg matrix: Francis double-shift QR with
# exceptional shifts.  Works on a 1-based (n+1)x(n+1) copy so the index
# arithmetic follows the classical EISPACK formulation.
# Returns (wr, wi, status); status == HQR_OK or the iteration count reached.
# ---------------------------------------------------------------------------

@njit(cache=True)
def hqr_numba(h, max_its):
    n = h.shape[0]
    a = np.zeros((n + 1, n + 1))
    for i in range(n):
        for j in range(n):
            a[i + 1, j + 1] = h[i, j]
    wr = np.zeros(n + 1)
    wi = np.zeros(n + 1)
    anorm = 0.0
    for i in range(1, n + 1):
        for j in range(max(i - 1, 1), n + 1):
            anorm += abs(a[i, j])
    nn = n
    t = 0.0
    x = y = z = w = p = q = r = s = 0.0
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
                        wi[nn - 1] = -z
                        wi[nn] = z
                    nn -= 2
                else:
                    if its >= max_its:
                        return wr[1:], wi[1:], its
                    if its > 0 and its % 10 == 0:
                        t += x
                        for i in range(1, nn + 1):
                            a[i, i] -= x
                        s = abs(a[nn, nn - 1]) + abs(a[nn - 1, nn - 2])
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
                        s = math.sqrt(p * p + q * q + r * r)
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
            if not (nn >= 1 and l < nn - 1):
                break
    return wr[1:], wi[1:], HQR_OK


def hqr_numpy(h, max_its):
    """Same algorithm as :func:`hqr_numba`; row/column sweeps vectorised."""
    n = h.shape[0]
    a = np.zeros((n + 1, n + 1))
    a[1:, 1:] = h
    wr = np.zeros(n + 1)
    wi = np.zeros(n + 1)
    anorm = np.abs(np.triu(a[1:, 1:], -1)).sum()
    nn = n
    t = 0.0
    x = y = z = w = p = q = r = s = 0.0
    while nn >= 1:
        its = 0
        while True:
            l = 1
            if nn > 1:
                idx = np.arange(nn, 1, -1)
                sv = np.abs(a[idx - 1, idx - 1]) + np.abs(a[idx, idx])
                sv[sv == 0.0] = anorm
                small = np.abs(a[idx, idx - 1]) + sv == sv
                hits = np.flatnonzero(small)
                if hits.size:
                    l = int(idx[hits[0]])
                    a[l, l - 1] = 0.0
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
                        z = p + math.copysign(z, p) if p != 0.0 else z
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
                    if its >= max_its:
                        return wr[1:], wi[1:], its
                    if its > 0 and its % 10 == 0:
                        t += x
                        d = np.arange(1, nn + 1)
                        a[d, d] -= x
                        s = abs(a[nn, nn - 1]) + abs(a[nn - 1, nn - 2])
                        x = y = 0.75 * s
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
                    if m + 2 <= nn:
                        i = np.arange(m + 2, nn + 1)
                        a[i, i - 2] = 0.0
                        i = i[1:]
                        a[i, i - 3] = 0.0
                    for k in range(m, nn):
                        if k != m:
                            p = a[k, k - 1]
                            q = a[k + 1, k - 1]
                            r = a[k + 2, k - 1] if k != nn - 1 else 0.0
                            x = abs(p) + abs(q) + abs(r)
                            if x != 0.0:
                                p /= x
                                q /= x
                                r /= x
                        s = math.sqrt(p * p + q * q + r * r)
                        if p < 0.0:
                            s = -s
                        if s == 0.0:
                            continue
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
                        last = k == nn - 1
                        pv = a[k, k:nn + 1] + q * a[k + 1, k:nn + 1]
                        if not last:
                            pv += r * a[k + 2, k:nn + 1]
                            a[k + 2, k:nn + 1] -= pv * z
                        a[k + 1, k:nn + 1] -= pv * y
                        a[k, k:nn + 1] -= pv * x
                        mmin = min(nn, k + 3)
                        pc = x * a[l:mmin + 1, k] + y * a[l:mmin + 1, k + 1]
                        if not last:
                            pc += z * a[l:mmin + 1, k + 2]
                            a[l:mmin + 1, k + 2] -= pc * r
                        a[l:mmin + 1, k + 1] -= pc * q
                        a[l:mmin + 1, k] -= pc
            if not (nn >= 1 and l < nn - 1):
                break
    return wr[1:], wi[1:], HQR_OK


# ---------------------------------------------------------------------------
# All-pairs unweighted shortest paths (BFS).  Input is CSR adjacency.
# Unreachable pairs get -1.
# ---------------------------------------------------------------------------

@njit(cache=True)
def bfs_all_pairs_numba(indptr, indices, n):
    dist = np.full((n, n), -1, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    for src in range(n):
        head = 0
        tail = 0
        queue[tail] = src
        tail += 1
        dist[src, src] = 0
        while head < tail:
            u = queue[head]
            head += 1
            du = dist[src, u]
            for e in range(indptr[u], indptr[u + 1]):
                v = indices[e]
                if dist[src, v] < 0:
                    dist[src, v] = du + 1
                    queue[tail] = v
                    tail += 1
    return dist


def bfs_all_pairs_numpy(indptr, indices, n):
    """Level-synchronous BFS from every source at once via boolean products."""
    adj = np.zeros((n, n), dtype=np.int64)
    rows = np.repeat(np.arange(n), np.diff(indptr))
    adj[rows, indices] = 1
    dist = np.full((n, n), -1, dtype=np.int64)
    frontier = np.eye(n, dtype=np.int64)
    seen = frontier.astype(bool)
    dist[seen] = 0
    level = 0
    while frontier.any():
        level += 1
        nxt = (frontier @ adj > 0) & ~seen
        dist[nxt] = level
        seen |= nxt
        frontier = nxt.astype(np.int64)
    return dist


if USE_NUMBA:
    hessenberg = hessenberg_numba
    hqr = hqr_numba
    bfs_all_pairs = bfs_all_pairs_numba
else:
    hessenberg = hessenberg_numpy
    hqr = hqr_numpy
    bfs_all_pairs = bfs_all_pairs_numpy
