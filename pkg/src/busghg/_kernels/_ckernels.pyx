# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: haversine arrays, pair building, batched Dijkstra.

Semantics must match busghg._kernels._pure exactly; parity is enforced by
tests/test_kernels.py.
"""

from libc.math cimport sin, cos, asin, sqrt, M_PI, INFINITY

import numpy as np

BACKEND = "cython"

cdef double EARTH_RADIUS_M = 6371000.0
cdef double DEG2RAD = M_PI / 180.0


cdef inline double _hav(double lat1, double lon1, double lat2, double lon2) noexcept nogil:
    cdef double p1 = lat1 * DEG2RAD
    cdef double p2 = lat2 * DEG2RAD
    cdef double sp = sin((lat2 - lat1) * DEG2RAD * 0.5)
    cdef double sl = sin((lon2 - lon1) * DEG2RAD * 0.5)
    cdef double a = sp * sp + cos(p1) * cos(p2) * (sl * sl)
    if a > 1.0:
        a = 1.0
    return 2.0 * EARTH_RADIUS_M * asin(sqrt(a))


def haversine_m(lat1, lon1, lat2, lon2):
    """Elementwise great-circle distance in meters between degree coordinates."""
    cdef double[::1] a1 = np.ascontiguousarray(lat1, dtype=np.float64)
    cdef double[::1] o1 = np.ascontiguousarray(lon1, dtype=np.float64)
    cdef double[::1] a2 = np.ascontiguousarray(lat2, dtype=np.float64)
    cdef double[::1] o2 = np.ascontiguousarray(lon2, dtype=np.float64)
    cdef Py_ssize_t n = a1.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    for i in range(n):
        ov[i] = _hav(a1[i], o1[i], a2[i], o2[i])
    return out


def pair_partition(ts, lat, lon, double max_gap_s, double max_speed_kmh):
    """Pair consecutive fixes of one time-sorted partition.

    Same contract as the pure fallback: returns (starts, dists, n_gap,
    n_dup, n_speed).
    """
    cdef double[::1] tv = np.ascontiguousarray(ts, dtype=np.float64)
    cdef double[::1] av = np.ascontiguousarray(lat, dtype=np.float64)
    cdef double[::1] ov = np.ascontiguousarray(lon, dtype=np.float64)
    cdef Py_ssize_t n = tv.shape[0]
    if n < 2:
        return (np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64), 0, 0, 0)
    starts = np.empty(n - 1, dtype=np.int64)
    dists = np.empty(n - 1, dtype=np.float64)
    cdef long long[::1] sv = starts
    cdef double[::1] dv = dists
    cdef Py_ssize_t i, k = 0
    cdef long n_gap = 0, n_dup = 0, n_speed = 0
    cdef double dt, d
    for i in range(n - 1):
        dt = tv[i + 1] - tv[i]
        if dt < 0.0:
            raise ValueError("partition is not sorted by timestamp")
        if dt == 0.0:
            n_dup += 1
            continue
        if dt >= max_gap_s:
            n_gap += 1
            continue
        d = _hav(av[i], ov[i], av[i + 1], ov[i + 1])
        # scaled strict-> comparison; see _pure.speed_exceeds
        if d * 36.0 > max_speed_kmh * dt * 10.0:
            n_speed += 1
            continue
        sv[k] = i
        dv[k] = d
        k += 1
    return (starts[:k].copy(), dists[:k].copy(), n_gap, n_dup, n_speed)


def dijkstra_many(indptr, indices, weights, sources, targets):
    """Point-to-point shortest-path distances on a CSR graph (inf if unreachable)."""
    cdef long long[::1] pv = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef int[::1] iv = np.ascontiguousarray(indices, dtype=np.int32)
    cdef double[::1] wv = np.ascontiguousarray(weights, dtype=np.float64)
    cdef long long[::1] src = np.ascontiguousarray(sources, dtype=np.int64)
    cdef long long[::1] dst = np.ascontiguousarray(targets, dtype=np.int64)

    cdef Py_ssize_t n = pv.shape[0] - 1
    cdef Py_ssize_t m = iv.shape[0]
    cdef Py_ssize_t nq = src.shape[0]
    out = np.empty(nq, dtype=np.float64)
    cdef double[::1] ov = out

    dist_a = np.empty(n, dtype=np.float64)
    stamp_a = np.zeros(n, dtype=np.int64)
    cdef double[::1] dist = dist_a
    cdef long long[::1] stamp = stamp_a
    # lazy-deletion binary heap; at most one push per improving relaxation
    heap_d_a = np.empty(m + 2, dtype=np.float64)
    heap_n_a = np.empty(m + 2, dtype=np.int64)
    cdef double[::1] hd = heap_d_a
    cdef long long[::1] hn = heap_n_a

    cdef long long epoch = 0
    cdef Py_ssize_t q, hs, parent, child, e
    cdef long long u, v, s, t
    cdef double du, nd, res

    for q in range(nq):
        s = src[q]
        t = dst[q]
        if s == t:
            ov[q] = 0.0
            continue
        epoch += 1
        res = INFINITY
        dist[s] = 0.0
        stamp[s] = epoch
        hd[0] = 0.0
        hn[0] = s
        hs = 1
        while hs > 0:
            # pop min
            du = hd[0]
            u = hn[0]
            hs -= 1
            hd[0] = hd[hs]
            hn[0] = hn[hs]
            parent = 0
            while True:
                child = 2 * parent + 1
                if child >= hs:
                    break
                if child + 1 < hs and hd[child + 1] < hd[child]:
                    child += 1
                if hd[child] < hd[parent]:
                    hd[parent], hd[child] = hd[child], hd[parent]
                    hn[parent], hn[child] = hn[child], hn[parent]
                    parent = child
                else:
                    break
            if stamp[u] == epoch and du > dist[u]:
                continue  # stale entry
            if u == t:
                res = du
                break
            for e in range(pv[u], pv[u + 1]):
                v = iv[e]
                nd = du + wv[e]
                if stamp[v] != epoch or nd < dist[v]:
                    dist[v] = nd
                    stamp[v] = epoch
                    # push
                    child = hs
                    hd[child] = nd
                    hn[child] = v
                    hs += 1
                    while child > 0:
                        parent = (child - 1) // 2
                        if hd[child] < hd[parent]:
                            hd[parent], hd[child] = hd[child], hd[parent]
                            hn[parent], hn[child] = hn[child], hn[parent]
                            child = parent
                        else:
                            break
        ov[q] = res
    return out
