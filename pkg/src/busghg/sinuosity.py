"""Fleet-wide sinuosity estimation and straight-line distance correction.

A random sample of segments is reconstructed on the street graph: both
endpoints snap to street corners and the shortest-path distance (RD) is
compared with the straight-line distance (ED). The mean ratio over usable
samples becomes the corrector applied to every segment above the
near-distance threshold.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from busghg.errors import DataError
from busghg.geo import StreetGraph, shortest_path_distances, snap_many
from busghg.pairing import PairingConfig, TravelSegment, speed_exceeds

# Dispositions a reconstructed sample can end in. Only "used" samples enter
# the mean. "undershoot" (ratio below 1 - SNAP_EPSILON, a snapping artifact
# beyond tolerance) is excluded rather than allowed to violate the ratio
# floor.
DISPOSITIONS = ("used", "zero_path", "speed_rejected", "unsnappable", "unreachable", "undershoot")

SNAP_EPSILON = 0.05  # tolerated under-1 slack before a ratio counts as undershoot


@dataclass(frozen=True, slots=True)
class SinuositySample:
    segment: TravelSegment
    origin_node: str | None
    dest_node: str | None
    real_dist_m: float | None
    euclid_m: float
    sinuosity: float | None
    disposition: str


@dataclass(frozen=True)
class SinuosityEstimate:
    """The fleet-wide corrector factor with its sample statistics."""

    mean_s: float
    sample_size: int  # number of used samples
    fraction_sampled: float
    histogram: tuple[tuple[float, float, int], ...]  # (bin_low, bin_high, count)
    dispositions: dict[str, int]


def identity_estimate() -> SinuosityEstimate:
    """A no-op corrector (mean 1.0), used to replay ground-truth drive logs."""
    return SinuosityEstimate(1.0, 1, 1.0, ((1.0, 1.05, 1),), {"used": 1})


def sample_segments(
    segments: Sequence[TravelSegment], fraction: float, seed: int
) -> list[TravelSegment]:
    """Bernoulli sample: each segment kept independently with p = fraction.

    Deterministic given the segment order and seed; the seed is recorded in
    the run manifest for reproducibility.
    """
    if not (0.0 < fraction <= 1.0):
        raise ValueError(f"sample fraction must be in (0, 1], got {fraction}")
    if not segments:
        return []
    rng = np.random.default_rng(seed)
    mask = rng.random(len(segments)) < fraction
    return [s for s, keep in zip(segments, mask) if keep]


def reconstruct_sample(
    sample: Sequence[TravelSegment],
    graph: StreetGraph,
    cfg: PairingConfig,
    snap_radius_m: float = 100.0,
) -> list[SinuositySample]:
    """Snap endpoints, run shortest paths, and classify every sample.

    Checks, in order: endpoints snap within snap_radius_m (else unsnappable);
    the target is reachable; the path-derived speed does not exceed the speed
    cap (absurd reconstructions); a zero path length or degenerate pair falls
    back to the straight-line distance (zero_path); otherwise the sample is
    used with sinuosity = RD / ED.
    """
    n = len(sample)
    if n == 0:
        return []
    s_lat = np.fromiter((s.start.latitude for s in sample), dtype=np.float64, count=n)
    s_lon = np.fromiter((s.start.longitude for s in sample), dtype=np.float64, count=n)
    e_lat = np.fromiter((s.end.latitude for s in sample), dtype=np.float64, count=n)
    e_lon = np.fromiter((s.end.longitude for s in sample), dtype=np.float64, count=n)
    o_idx = snap_many(s_lat, s_lon, graph, snap_radius_m)
    d_idx = snap_many(e_lat, e_lon, graph, snap_radius_m)

    snapped = np.nonzero((o_idx >= 0) & (d_idx >= 0))[0]
    dists = np.full(n, np.nan)
    if len(snapped):
        dists[snapped] = shortest_path_distances(graph, o_idx[snapped], d_idx[snapped])

    out: list[SinuositySample] = []
    for i, seg in enumerate(sample):
        ed = seg.euclid_m
        if o_idx[i] < 0 or d_idx[i] < 0:
            out.append(SinuositySample(seg, None, None, None, ed, None, "unsnappable"))
            continue
        origin = graph.node_ids[o_idx[i]]
        dest = graph.node_ids[d_idx[i]]
        rd = float(dists[i])
        if math.isinf(rd):
            out.append(SinuositySample(seg, origin, dest, None, ed, None, "unreachable"))
            continue
        if speed_exceeds(rd, seg.dt_s, cfg.max_speed_kmh):
            out.append(SinuositySample(seg, origin, dest, rd, ed, None, "speed_rejected"))
            continue
        if rd == 0.0 or ed <= 0.0:
            # endpoints share a street corner; adopt the straight line
            out.append(SinuositySample(seg, origin, dest, ed, ed, None, "zero_path"))
            continue
        s = rd / ed
        if s < 1.0 - SNAP_EPSILON:
            out.append(SinuositySample(seg, origin, dest, rd, ed, s, "undershoot"))
            continue
        out.append(SinuositySample(seg, origin, dest, rd, ed, s, "used"))
    return out


def estimate_sinuosity(
    samples: Iterable[SinuositySample],
    fraction_sampled: float = 1.0,
    bin_width: float = 0.05,
    hist_lo: float = 1.0,
    hist_hi: float = 3.0,
) -> SinuosityEstimate:
    """Arithmetic mean of sinuosity over used samples, with a histogram.

    Ratios slightly below 1 (within SNAP_EPSILON, a snapping artifact) are
    clamped to 1.0 before averaging and binning. The histogram covers
    [hist_lo, hist_hi) in bin_width steps plus an overflow bin.
    """
    dispositions = {d: 0 for d in DISPOSITIONS}
    used: list[float] = []
    for s in samples:
        dispositions[s.disposition] += 1
        if s.disposition == "used":
            used.append(max(1.0, s.sinuosity))
    if not used:
        raise DataError("no usable sinuosity samples (all snaps failed or paths degenerate)")
    mean_s = sum(used) / len(used)

    nbins = max(1, int(round((hist_hi - hist_lo) / bin_width)))
    counts = [0] * (nbins + 1)
    for v in used:
        if v >= hist_hi:
            counts[nbins] += 1
        else:
            idx = int((v - hist_lo) / bin_width)
            counts[min(max(idx, 0), nbins - 1)] += 1
    bins = []
    for b in range(nbins):
        bins.append((hist_lo + b * bin_width, hist_lo + (b + 1) * bin_width, counts[b]))
    bins.append((hist_hi, math.inf, counts[nbins]))
    return SinuosityEstimate(
        mean_s=mean_s,
        sample_size=len(used),
        fraction_sampled=fraction_sampled,
        histogram=tuple(bins),
        dispositions=dispositions,
    )


def corrected_distance(seg: TravelSegment, est: SinuosityEstimate, cfg: PairingConfig) -> float:
    """Straight-line distance scaled by the fleet mean, except very short pairs.

    Below the near threshold the straight line is adopted as the real
    distance unchanged; at or above it the mean sinuosity multiplies it.
    """
    if seg.euclid_m < cfg.near_threshold_m:
        return seg.euclid_m
    return seg.euclid_m * est.mean_s


def write_report_csv(est: SinuosityEstimate, path) -> None:
    """Histogram CSV with a commented summary block, enough to re-plot the
    sample distribution and to rerun later stages without the graph."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# mean_s={est.mean_s!r}\n")
        fh.write(f"# sample_size={est.sample_size}\n")
        fh.write(f"# fraction_sampled={est.fraction_sampled!r}\n")
        for name in DISPOSITIONS:
            fh.write(f"# {name}={est.dispositions.get(name, 0)}\n")
        w = csv.writer(fh)
        w.writerow(["bin_low", "bin_high", "count"])
        for lo, hi, count in est.histogram:
            w.writerow([repr(lo), "inf" if math.isinf(hi) else repr(hi), count])


def read_report_csv(path) -> SinuosityEstimate:
    meta: dict[str, str] = {}
    bins: list[tuple[float, float, int]] = []
    with open(path, newline="") as fh:
        rows = []
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key.strip()] = value.strip()
            else:
                rows.append(line)
        for row in csv.reader(rows):
            if not row or row[0] == "bin_low":
                continue
            bins.append((float(row[0]), float(row[1]), int(row[2])))
    try:
        return SinuosityEstimate(
            mean_s=float(meta["mean_s"]),
            sample_size=int(meta["sample_size"]),
            fraction_sampled=float(meta["fraction_sampled"]),
            histogram=tuple(bins),
            dispositions={d: int(meta.get(d, 0)) for d in DISPOSITIONS},
        )
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: malformed sinuosity report: {exc}") from None
