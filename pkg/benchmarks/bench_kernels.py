#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure NumPy/heapq fallback.

Usage:
    python benchmarks/bench_kernels.py [--pairs N] [--queries N] [--grid N]

Times the three hot loops on workloads shaped like the real pipeline: bulk
haversine over record pairs, pair building over one large vehicle-day
partition, and batched point-to-point Dijkstra on a city-sized grid graph.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from busghg._kernels import _pure

try:
    from busghg._kernels import _ckernels
except ImportError:
    _ckernels = None


def timeit(fn, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_haversine(impl, n, rng):
    lat1 = rng.uniform(-23.1, -22.7, n)
    lon1 = rng.uniform(-43.8, -43.1, n)
    lat2 = lat1 + rng.uniform(-0.01, 0.01, n)
    lon2 = lon1 + rng.uniform(-0.01, 0.01, n)
    return timeit(lambda: impl.haversine_m(lat1, lon1, lat2, lon2))


def bench_pairing(impl, n, rng):
    ts = np.cumsum(rng.integers(0, 250, n)).astype(np.float64)
    lat = -22.9 + np.cumsum(rng.uniform(-0.002, 0.002, n))
    lon = -43.4 + np.cumsum(rng.uniform(-0.002, 0.002, n))
    return timeit(lambda: impl.pair_partition(ts, lat, lon, 180.0, 120.0))


def grid_csr(side):
    n = side * side
    heads = [[] for _ in range(n)]
    for r in range(side):
        for c in range(side):
            i = r * side + c
            if c + 1 < side:
                heads[i].append((i + 1, 250.0))
                heads[i + 1].append((i, 250.0))
            if r + 1 < side:
                heads[i].append((i + side, 250.0))
                heads[i + side].append((i, 250.0))
    indptr = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        indptr[i + 1] = indptr[i] + len(heads[i])
    indices = np.empty(int(indptr[-1]), dtype=np.int32)
    weights = np.empty(int(indptr[-1]), dtype=np.float64)
    pos = 0
    for i in range(n):
        for j, w in heads[i]:
            indices[pos] = j
            weights[pos] = w
            pos += 1
    return indptr, indices, weights


def bench_dijkstra(impl, queries, side, rng):
    indptr, indices, weights = grid_csr(side)
    n = side * side
    src = rng.integers(0, n, queries).astype(np.int64)
    dst = rng.integers(0, n, queries).astype(np.int64)
    return timeit(lambda: impl.dijkstra_many(indptr, indices, weights, src, dst))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--pairs", type=int, default=1_000_000,
                    help="array length for haversine and pair building")
    ap.add_argument("--queries", type=int, default=5_000,
                    help="Dijkstra point-to-point queries")
    ap.add_argument("--grid", type=int, default=40,
                    help="grid side for the Dijkstra graph (grid^2 nodes)")
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    rows = []
    benches = [
        (f"haversine x {args.pairs:,}", lambda impl: bench_haversine(impl, args.pairs, rng)),
        (f"pair_partition x {args.pairs:,}", lambda impl: bench_pairing(impl, args.pairs, rng)),
        (f"dijkstra {args.queries:,} queries on {args.grid}x{args.grid} grid",
         lambda impl: bench_dijkstra(impl, args.queries, args.grid, rng)),
    ]
    for name, bench in benches:
        pure_t = bench(_pure)
        if _ckernels is not None:
            cy_t = bench(_ckernels)
            rows.append((name, pure_t, cy_t, pure_t / cy_t))
        else:
            rows.append((name, pure_t, None, None))

    width = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{width}}  {'pure':>10}  {'cython':>10}  {'speedup':>8}")
    for name, pure_t, cy_t, speedup in rows:
        if cy_t is None:
            print(f"{name:<{width}}  {pure_t * 1e3:>8.1f}ms  {'n/a':>10}  {'n/a':>8}")
        else:
            print(f"{name:<{width}}  {pure_t * 1e3:>8.1f}ms  {cy_t * 1e3:>8.1f}ms  "
                  f"{speedup:>7.1f}x")
    if _ckernels is None:
        print("\ncompiled kernels unavailable; rebuild with Cython for the comparison")


if __name__ == "__main__":
    main()
