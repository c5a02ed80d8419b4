"""NetworkGraph model, raster <-> graph conversion, segments and shortest paths."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import networkx as nx
import numpy as np

from .raster import BinaryMask, Pixel, as_mask, in_bounds, rasterize_segment

Polyline = Tuple[Pixel, ...]

_OFFSETS = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


class GraphError(ValueError):
    pass


def polyline_length(points: Sequence[Pixel]) -> float:
    if len(points) < 2:
        return 0.0
    arr = np.asarray(points, dtype=np.float64)
    steps = np.diff(arr, axis=0)
    return float(np.hypot(steps[:, 0], steps[:, 1]).sum())


def _canonical(points: Sequence[Pixel]) -> Polyline:
    pts: List[Pixel] = []
    for p in points:
        p = (int(p[0]), int(p[1]))
        if not pts or pts[-1] != p:
            pts.append(p)
    if len(pts) < 2:
        raise GraphError(f"zero-length edge {list(points)}")
    if pts[0] == pts[-1]:
        if len(pts) < 3:
            raise GraphError(f"degenerate closed edge {pts}")
        # closed loop: keep the anchor, walk towards the smaller neighbour
        if pts[-2] < pts[1]:
            pts.reverse()
    elif pts[-1] < pts[0]:
        pts.reverse()
    return tuple(pts)


@dataclass(frozen=True)
class NetworkGraph:
    """Undirected graph of pixel-anchored nodes joined by polyline edges.

    Use :meth:`build`; it orients every edge canonically, sorts nodes and
    edges and adds missing endpoints to the node set, so two graphs with the
    same topology compare (and serialize) identically.
    """

    width: int
    height: int
    nodes: Tuple[Pixel, ...] = ()
    edges: Tuple[Polyline, ...] = ()

    @classmethod
    def build(
        cls,
        width: int,
        height: int,
        nodes: Iterable[Pixel] = (),
        edges: Iterable[Sequence[Pixel]] = (),
    ) -> "NetworkGraph":
        if width <= 0 or height <= 0:
            raise GraphError(f"graph dimensions must be positive, got {width}x{height}")
        canon = sorted(_canonical(e) for e in edges)
        node_set: Set[Pixel] = {(int(r), int(c)) for r, c in nodes}
        for e in canon:
            node_set.add(e[0])
            node_set.add(e[-1])
        return cls(width, height, tuple(sorted(node_set)), tuple(canon))

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.height, self.width)

    def is_empty(self) -> bool:
        return not self.nodes and not self.edges

    def degree(self) -> Dict[Pixel, int]:
        deg: Dict[Pixel, int] = {n: 0 for n in self.nodes}
        for e in self.edges:
            deg[e[0]] += 1
            deg[e[-1]] += 1
        return deg

    def total_length(self) -> float:
        return sum(polyline_length(e) for e in self.edges)

    @cached_property
    def points(self) -> np.ndarray:
        """Unique polyline and node pixels, row-major, as an (n, 2) int array."""
        pts = set(self.nodes)
        for e in self.edges:
            pts.update(e)
        if not pts:
            return np.empty((0, 2), dtype=np.int64)
        return np.asarray(sorted(pts), dtype=np.int64)

    @cached_property
    def point_graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(map(tuple, self.points.tolist()))
        for e in self.edges:
            for a, b in zip(e[:-1], e[1:]):
                g.add_edge(a, b, weight=math.hypot(a[0] - b[0], a[1] - b[1]))
        return g


@dataclass(frozen=True)
class Segment:
    endpoints: Tuple[Pixel, Pixel]
    path: Polyline
    length: float

    @property
    def closed(self) -> bool:
        return self.endpoints[0] == self.endpoints[1]


def _pruned_adjacency(pixels: Set[Pixel]) -> Dict[Pixel, List[Pixel]]:
    adj: Dict[Pixel, List[Pixel]] = {}
    for p in pixels:
        nbrs = []
        for dr, dc in _OFFSETS:
            q = (p[0] + dr, p[1] + dc)
            if q not in pixels:
                continue
            # a diagonal step that a shared 4-neighbour already bridges is redundant
            if dr and dc and ((p[0], q[1]) in pixels or (q[0], p[1]) in pixels):
                continue
            nbrs.append(q)
        adj[p] = sorted(nbrs)
    return adj


def raster_to_graph(skeleton: BinaryMask) -> NetworkGraph:
    """Vectorize a thin skeleton.

    Nodes are pixels whose degree is not 2 plus one anchor per isolated
    cycle; edges are the chains of degree-2 pixels between them.
    """
    mask = as_mask(skeleton)
    height, width = mask.shape
    pixels = {(int(r), int(c)) for r, c in np.argwhere(mask)}
    adj = _pruned_adjacency(pixels)
    node_set = {p for p, nbrs in adj.items() if len(nbrs) != 2}
    used: Set[Tuple[Pixel, Pixel]] = set()
    covered: Set[Pixel] = set(node_set)
    edges: List[List[Pixel]] = []

    def trace(start: Pixel, first: Pixel) -> List[Pixel]:
        path = [start, first]
        used.add((min(start, first), max(start, first)))
        prev, cur = start, first
        while cur not in node_set:
            nxt = next((q for q in adj[cur] if q != prev), None)
            if nxt is None or (min(cur, nxt), max(cur, nxt)) in used:
                break
            used.add((min(cur, nxt), max(cur, nxt)))
            path.append(nxt)
            prev, cur = cur, nxt
        covered.update(path)
        return path

    for n in sorted(node_set):
        for q in adj[n]:
            if (min(n, q), max(n, q)) not in used:
                edges.append(trace(n, q))

    for p in sorted(pixels - covered):
        if p in covered:
            continue
        node_set.add(p)
        covered.add(p)
        edges.append(trace(p, adj[p][0]))

    return NetworkGraph.build(width, height, node_set, edges)


def graph_to_raster(g: NetworkGraph, width: int, height: int) -> BinaryMask:
    mask = np.zeros((height, width), dtype=bool)
    for i, e in enumerate(g.edges):
        for p in e:
            if not in_bounds(p, mask.shape):
                raise GraphError(f"edge {i} has point {p} outside {height}x{width} grid")
        for a, b in zip(e[:-1], e[1:]):
            rasterize_segment(a, b, mask)
    for n in g.nodes:
        if not in_bounds(n, mask.shape):
            raise GraphError(f"node {n} outside {height}x{width} grid")
        mask[n] = True
    return mask


def extract_segments(g: NetworkGraph) -> List[Segment]:
    """Split the graph at junctions (degree >= 3) and endpoints (degree 1).

    Junction-free components contribute too: a path gives one
    endpoint-to-endpoint segment, a cycle one segment from its anchor around
    the loop. Segment paths partition the edges.
    """
    deg = g.degree()
    incident: Dict[Pixel, List[int]] = defaultdict(list)
    for i, e in enumerate(g.edges):
        incident[e[0]].append(i)
        if e[-1] != e[0]:
            incident[e[-1]].append(i)
    used = [False] * len(g.edges)
    segments: List[Segment] = []

    def walk(start: Pixel, ei: int) -> Segment:
        path: List[Pixel] = [start]
        cur = start
        while True:
            used[ei] = True
            e = g.edges[ei]
            pts = e if e[0] == cur else e[::-1]
            path.extend(pts[1:])
            cur = pts[-1]
            if cur == start or deg[cur] != 2:
                break
            nxt = next((j for j in incident[cur] if not used[j]), None)
            if nxt is None:
                break
            ei = nxt
        return Segment((start, cur), tuple(path), polyline_length(path))

    for n in g.nodes:
        if deg[n] == 2 or deg[n] == 0:
            continue
        for ei in incident[n]:
            if not used[ei]:
                segments.append(walk(n, ei))
    for ei, e in enumerate(g.edges):
        if not used[ei]:
            segments.append(walk(e[0], ei))
    return segments


def nearest_graph_point(g: NetworkGraph, q: Pixel) -> Tuple[Pixel, float]:
    pts = g.points
    if len(pts) == 0:
        raise GraphError("empty graph")
    d2 = (pts[:, 0] - q[0]) ** 2 + (pts[:, 1] - q[1]) ** 2
    i = int(np.argmin(d2))
    return (int(pts[i, 0]), int(pts[i, 1])), math.sqrt(float(d2[i]))


def graph_shortest_path(g: NetworkGraph, a: Pixel, b: Pixel) -> Optional[List[Pixel]]:
    """Dijkstra over polyline points with Euclidean step weights; None if disconnected."""
    pg = g.point_graph
    for p in (a, b):
        if p not in pg:
            raise GraphError(f"point {p} is not on the graph")
    if a == b:
        return [a]
    try:
        return [tuple(p) for p in nx.dijkstra_path(pg, a, b, weight="weight")]
    except nx.NetworkXNoPath:
        return None
