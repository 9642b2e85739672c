"""Geospatial primitives: great-circle distance, street graphs, snapping, shortest paths."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from busghg import _kernels
from busghg.errors import DataError

EARTH_RADIUS_M = 6_371_000.0
M_PER_DEG_LAT = EARTH_RADIUS_M * math.pi / 180.0  # meters per degree of latitude


@dataclass(frozen=True, slots=True)
class GeoPoint:
    """A WGS84 position in decimal degrees."""

    latitude: float
    longitude: float

    def __post_init__(self):
        if not (-90.0 <= self.latitude <= 90.0):
            raise ValueError(f"latitude {self.latitude} outside [-90, 90]")
        if not (-180.0 <= self.longitude <= 180.0):
            raise ValueError(f"longitude {self.longitude} outside [-180, 180]")


@dataclass(frozen=True, slots=True)
class PathResult:
    """Shortest-path query result; distance is inf when not reachable."""

    origin_node: str
    destination_node: str
    distance: float
    reachable: bool


def haversine_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters (Earth radius fixed at 6,371,000 m)."""
    return _haversine(a.latitude, a.longitude, b.latitude, b.longitude)


def _haversine(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    p1 = math.radians(lat1)
    p2 = math.radians(lat2)
    sp = math.sin(math.radians(lat2 - lat1) * 0.5)
    sl = math.sin(math.radians(lon2 - lon1) * 0.5)
    a = sp * sp + math.cos(p1) * math.cos(p2) * (sl * sl)
    if a > 1.0:
        a = 1.0
    return 2.0 * EARTH_RADIUS_M * math.asin(math.sqrt(a))


def _id_sort_key(node_id: str):
    # numeric ids order numerically ("3" before "7" before "10"), others lexically
    if node_id.isdigit():
        return (0, int(node_id), "")
    return (1, 0, node_id)


class StreetGraph:
    """Immutable road graph with CSR adjacency and a cell index for node snapping.

    Nodes are opaque string ids mapped to dense indices; edge lengths are
    taken as given (the engine never re-derives geometry from shapes).
    """

    _INDEX_CELL_DEG = 0.005  # ~550 m buckets for the snap index

    def __init__(self, nodes: dict[str, GeoPoint], edges: list[tuple[str, str, float, bool]]):
        if not nodes:
            raise DataError("street graph has no nodes")
        self.node_ids = list(nodes.keys())
        self._id_to_idx = {nid: i for i, nid in enumerate(self.node_ids)}
        self.lats = np.array([nodes[n].latitude for n in self.node_ids], dtype=np.float64)
        self.lons = np.array([nodes[n].longitude for n in self.node_ids], dtype=np.float64)
        self.edges = list(edges)
        self._validate_edges(nodes)
        self._build_csr()
        self._build_index()

    def _validate_edges(self, nodes):
        for k, (a, b, length, _oneway) in enumerate(self.edges):
            if a not in self._id_to_idx or b not in self._id_to_idx:
                raise DataError(f"edge {k} ({a} -> {b}) references an unknown node")
            if not (length > 0.0):
                raise DataError(f"edge {k} ({a} -> {b}) has non-positive length {length}")
            gc = haversine_distance(nodes[a], nodes[b])
            if length < 0.99 * gc:
                raise DataError(
                    f"edge {k} ({a} -> {b}) length {length:.1f} m is shorter than "
                    f"0.99 x great-circle distance {gc:.1f} m"
                )

    def _build_csr(self):
        n = len(self.node_ids)
        heads: list[list[tuple[int, float]]] = [[] for _ in range(n)]
        for a, b, length, oneway in self.edges:
            ia, ib = self._id_to_idx[a], self._id_to_idx[b]
            heads[ia].append((ib, length))
            if not oneway:
                heads[ib].append((ia, length))
        indptr = np.zeros(n + 1, dtype=np.int64)
        for i in range(n):
            indptr[i + 1] = indptr[i] + len(heads[i])
        m = int(indptr[-1])
        indices = np.empty(m, dtype=np.int32)
        weights = np.empty(m, dtype=np.float64)
        pos = 0
        for i in range(n):
            for j, w in heads[i]:
                indices[pos] = j
                weights[pos] = w
                pos += 1
        self.indptr, self.indices, self.weights = indptr, indices, weights

    def _build_index(self):
        cell = self._INDEX_CELL_DEG
        buckets: dict[tuple[int, int], list[int]] = {}
        for i in range(len(self.node_ids)):
            key = (int(math.floor(self.lats[i] / cell)), int(math.floor(self.lons[i] / cell)))
            buckets.setdefault(key, []).append(i)
        self._buckets = buckets

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def node_index(self, node_id: str) -> int:
        try:
            return self._id_to_idx[node_id]
        except KeyError:
            raise KeyError(f"unknown node id {node_id!r}") from None

    def node_point(self, node_id: str) -> GeoPoint:
        i = self.node_index(node_id)
        return GeoPoint(float(self.lats[i]), float(self.lons[i]))

    def _candidates_near(self, lat: float, lon: float, radius_m: float):
        cell = self._INDEX_CELL_DEG
        dlat = radius_m / M_PER_DEG_LAT * 1.01
        coslat = max(
            0.01,
            min(math.cos(math.radians(lat - dlat)), math.cos(math.radians(lat + dlat))),
        )
        dlon = radius_m / (M_PER_DEG_LAT * coslat) * 1.01
        r0 = int(math.floor((lat - dlat) / cell))
        r1 = int(math.floor((lat + dlat) / cell))
        c0 = int(math.floor((lon - dlon) / cell))
        c1 = int(math.floor((lon + dlon) / cell))
        for r in range(r0, r1 + 1):
            for c in range(c0, c1 + 1):
                yield from self._buckets.get((r, c), ())


def snap_to_node(p: GeoPoint, graph: StreetGraph, max_radius_m: float = 100.0) -> str | None:
    """Nearest graph node within max_radius_m, or None.

    Exact-distance ties break toward the smallest node id (numeric-aware).
    """
    idx = _snap_index(p.latitude, p.longitude, graph, max_radius_m)
    return None if idx < 0 else graph.node_ids[idx]


def _snap_index(lat: float, lon: float, graph: StreetGraph, max_radius_m: float) -> int:
    best_d = math.inf
    best_key = None
    best_i = -1
    for i in graph._candidates_near(lat, lon, max_radius_m):
        d = _haversine(lat, lon, graph.lats[i], graph.lons[i])
        if d > max_radius_m:
            continue
        key = _id_sort_key(graph.node_ids[i])
        if d < best_d or (d == best_d and (best_key is None or key < best_key)):
            best_d, best_key, best_i = d, key, i
    return best_i


def snap_many(lats: np.ndarray, lons: np.ndarray, graph: StreetGraph,
              max_radius_m: float = 100.0) -> np.ndarray:
    """Vector form of snap_to_node returning node indices, -1 when none in range."""
    out = np.empty(len(lats), dtype=np.int64)
    for k in range(len(lats)):
        out[k] = _snap_index(float(lats[k]), float(lons[k]), graph, max_radius_m)
    return out


def shortest_path_distance(origin: str, destination: str, graph: StreetGraph) -> PathResult:
    """Minimum edge-length sum between two nodes; unknown ids raise KeyError."""
    i = graph.node_index(origin)
    j = graph.node_index(destination)
    if i == j:
        return PathResult(origin, destination, 0.0, True)
    d = float(
        _kernels.dijkstra_many(
            graph.indptr, graph.indices, graph.weights,
            np.array([i], dtype=np.int64), np.array([j], dtype=np.int64),
        )[0]
    )
    if math.isinf(d):
        return PathResult(origin, destination, math.inf, False)
    return PathResult(origin, destination, d, True)


def shortest_path_distances(graph: StreetGraph, source_idx: np.ndarray,
                            target_idx: np.ndarray) -> np.ndarray:
    """Batched node-index form of shortest_path_distance (inf = unreachable)."""
    return _kernels.dijkstra_many(
        graph.indptr, graph.indices, graph.weights,
        np.asarray(source_idx, dtype=np.int64), np.asarray(target_idx, dtype=np.int64),
    )


def load_graph_csv(nodes_path, edges_path) -> StreetGraph:
    """Load a graph from nodes.csv (node_id, lat, lon) and edges.csv
    (node_a, node_b, length_m, oneway in {0,1})."""
    nodes: dict[str, GeoPoint] = {}
    with open(nodes_path, newline="") as fh:
        for row in csv.DictReader(fh):
            try:
                nodes[row["node_id"]] = GeoPoint(float(row["lat"]), float(row["lon"]))
            except (KeyError, ValueError) as exc:
                raise DataError(f"{nodes_path}: bad node row {row!r}: {exc}") from None
    edges: list[tuple[str, str, float, bool]] = []
    with open(edges_path, newline="") as fh:
        for row in csv.DictReader(fh):
            try:
                edges.append(
                    (row["node_a"], row["node_b"], float(row["length_m"]),
                     row.get("oneway", "0").strip() == "1")
                )
            except (KeyError, ValueError) as exc:
                raise DataError(f"{edges_path}: bad edge row {row!r}: {exc}") from None
    return StreetGraph(nodes, edges)


def write_graph_csv(graph: StreetGraph, nodes_path, edges_path) -> None:
    """Write a graph back to the nodes.csv / edges.csv pair."""
    with open(nodes_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node_id", "lat", "lon"])
        for i, nid in enumerate(graph.node_ids):
            w.writerow([nid, repr(float(graph.lats[i])), repr(float(graph.lons[i]))])
    with open(edges_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node_a", "node_b", "length_m", "oneway"])
        for a, b, length, oneway in graph.edges:
            w.writerow([a, b, repr(length), int(oneway)])


def load_graph_geojson(path) -> StreetGraph:
    """Load a graph from a GeoJSON LineString collection.

    Each LineString becomes one edge between its first and last coordinate;
    its length is the exact sum of haversine distances over consecutive
    coordinates. Shared endpoints become shared nodes (ids n0, n1, ... in
    order of first appearance). A feature property ``oneway`` of 1 makes
    the edge directed.
    """
    with open(path) as fh:
        doc = json.load(fh)
    nodes: dict[str, GeoPoint] = {}
    coord_ids: dict[tuple[float, float], str] = {}
    edges: list[tuple[str, str, float, bool]] = []

    def node_for(lon: float, lat: float) -> str:
        key = (lat, lon)
        nid = coord_ids.get(key)
        if nid is None:
            nid = f"n{len(coord_ids)}"
            coord_ids[key] = nid
            nodes[nid] = GeoPoint(lat, lon)
        return nid

    for feat in doc.get("features", []):
        geom = feat.get("geometry") or {}
        if geom.get("type") != "LineString":
            continue
        coords = geom.get("coordinates", [])
        if len(coords) < 2:
            raise DataError(f"{path}: LineString with fewer than 2 coordinates")
        length = 0.0
        for (lon1, lat1), (lon2, lat2) in zip(coords, coords[1:]):
            length += _haversine(lat1, lon1, lat2, lon2)
        a = node_for(*coords[0])
        b = node_for(*coords[-1])
        oneway = bool((feat.get("properties") or {}).get("oneway", 0))
        edges.append((a, b, length, oneway))
    return StreetGraph(nodes, edges)
