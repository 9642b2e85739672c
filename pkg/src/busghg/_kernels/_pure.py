"""Pure NumPy / stdlib implementations of the hot kernels.

Used when the compiled extension is unavailable or when
``BUSGHG_PURE_KERNELS=1`` is set. Semantics (including rejection counters
and boundary rules) must match ``_ckernels.pyx`` exactly.
"""

from __future__ import annotations

import heapq

import numpy as np

EARTH_RADIUS_M = 6_371_000.0

BACKEND = "pure"


def haversine_m(lat1, lon1, lat2, lon2):
    """Elementwise great-circle distance in meters between degree coordinates."""
    lat1 = np.asarray(lat1, dtype=np.float64)
    lon1 = np.asarray(lon1, dtype=np.float64)
    lat2 = np.asarray(lat2, dtype=np.float64)
    lon2 = np.asarray(lon2, dtype=np.float64)
    p1 = np.radians(lat1)
    p2 = np.radians(lat2)
    sp = np.sin(np.radians(lat2 - lat1) * 0.5)
    sl = np.sin(np.radians(lon2 - lon1) * 0.5)
    a = sp * sp + np.cos(p1) * np.cos(p2) * (sl * sl)
    a = np.minimum(a, 1.0)
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.sqrt(a))


def speed_exceeds(dist_m, dt_s, max_speed_kmh):
    """True when dist_m / dt_s exceeds max_speed_kmh (strictly).

    Scaled comparison (d * 36 > v * dt * 10 with integer-valued factors)
    so a pair at exactly the limit is kept, as the strict > filter demands,
    without division rounding flipping the boundary case.
    """
    return np.asarray(dist_m) * 36.0 > max_speed_kmh * np.asarray(dt_s) * 10.0


def pair_partition(ts, lat, lon, max_gap_s, max_speed_kmh):
    """Pair consecutive fixes of one time-sorted partition.

    Returns ``(starts, dists, n_gap, n_dup, n_speed)`` where ``starts[k]``
    is the index i of an emitted pair (i, i+1) and ``dists[k]`` its
    great-circle distance. Pairs with dt == 0 are counted as duplicates,
    dt >= max_gap_s as gaps, and pairs whose derived speed strictly
    exceeds max_speed_kmh as speed rejections.
    """
    ts = np.asarray(ts, dtype=np.float64)
    n = ts.shape[0]
    if n < 2:
        return (np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64), 0, 0, 0)
    dt = np.diff(ts)
    if np.any(dt < 0.0):
        raise ValueError("partition is not sorted by timestamp")
    dup = dt == 0.0
    gap = dt >= max_gap_s
    cand = np.nonzero(~(dup | gap))[0]
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    d = haversine_m(lat[cand], lon[cand], lat[cand + 1], lon[cand + 1])
    too_fast = speed_exceeds(d, dt[cand], max_speed_kmh)
    keep = ~too_fast
    starts = cand[keep].astype(np.int64)
    return (starts, d[keep], int(gap.sum()), int(dup.sum()), int(too_fast.sum()))


def dijkstra_many(indptr, indices, weights, sources, targets):
    """Point-to-point shortest-path distances on a CSR graph.

    One query per (sources[i], targets[i]) pair; returns float64 distances
    with inf for unreachable targets. Early exit once the target settles.
    """
    indptr = np.asarray(indptr)
    indices = np.asarray(indices)
    weights = np.asarray(weights, dtype=np.float64)
    sources = np.asarray(sources)
    targets = np.asarray(targets)
    out = np.empty(len(sources), dtype=np.float64)
    for q in range(len(sources)):
        src = int(sources[q])
        dst = int(targets[q])
        if src == dst:
            out[q] = 0.0
            continue
        dist = {src: 0.0}
        done = set()
        heap = [(0.0, src)]
        found = np.inf
        while heap:
            d, u = heapq.heappop(heap)
            if u in done:
                continue
            done.add(u)
            if u == dst:
                found = d
                break
            for e in range(indptr[u], indptr[u + 1]):
                v = int(indices[e])
                nd = d + weights[e]
                if nd < dist.get(v, np.inf):
                    dist[v] = nd
                    heapq.heappush(heap, (nd, v))
        out[q] = found
    return out
