"""Iterative delineation engine.

Best-first sweep over patch centres: the oracle proposes border exits, the
most confident unexplored exit is popped, linked back to the centre that
proposed it by a Dijkstra path over the probability map, and becomes the
next centre. Exits near already-visited centres are either discarded (near
the popped point's precedent) or joined to that centre without expansion.
When the bag empties a new start is picked away from explored areas.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Set, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import ndimage

from app.logging_utils import get_logger
from app.schemas import TraceReport

from .connectivity import ConnectivityOracle, OracleConfig, collapse_runs
from .graph import NetworkGraph, Polyline, raster_to_graph
from .raster import (
    BinaryMask,
    BorderDetection,
    Pixel,
    ProbabilityMap,
    as_probability_map,
    label_components,
    patch_bounds,
    skeletonize,
)

logger = get_logger(__name__)

EPSILON = 1e-3
SQRT2 = math.sqrt(2.0)
_OFFSETS = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]

Window = Tuple[int, int, int, int]


class DelineationConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    oracle: OracleConfig = Field(default_factory=OracleConfig)
    tau_conf: float = Field(default=0.5, ge=0.0, le=1.0, description="detection threshold")
    r_nbhd: int = Field(default=5, ge=1, description="visited-neighbourhood radius (Chebyshev px)")
    d_restart: Optional[float] = Field(default=None, gt=0.0, description="minimum restart distance; default k")
    tau_restart: float = Field(default=0.75, ge=0.0, le=1.0)
    max_steps: Optional[int] = Field(default=None, gt=0, description="default 4 * pixels / r_nbhd")
    complete_tails: bool = Field(default=True, description="link dead ends that stop inside the border square")

    def restart_distance(self) -> float:
        return self.d_restart if self.d_restart is not None else float(self.oracle.k)

    def step_limit(self, shape: Tuple[int, int]) -> int:
        if self.max_steps is not None:
            return self.max_steps
        return max(1, 4 * shape[0] * shape[1] // self.r_nbhd)


@dataclass(frozen=True)
class ExplorationEntry:
    location: Pixel
    confidence: float
    precedent: Pixel
    insertion_index: int


@dataclass
class TraceState:
    """Mutable state of one run: bag B_E, visited B_V and the graph under construction."""

    shape: Tuple[int, int]
    bag: List[Tuple[float, int, ExplorationEntry]] = field(default_factory=list)
    visited: List[Pixel] = field(default_factory=list)
    visited_set: Set[Pixel] = field(default_factory=set)
    visited_mask: BinaryMask = None  # type: ignore[assignment]
    drawn: BinaryMask = None  # type: ignore[assignment]
    edges: List[Polyline] = field(default_factory=list)
    linked: Set[Tuple[Pixel, Pixel]] = field(default_factory=set)
    starts: List[Pixel] = field(default_factory=list)
    tips: List[Pixel] = field(default_factory=list)
    insertions: int = 0
    steps: int = 0
    bag_high_water: int = 0
    discarded: int = 0
    snapped: int = 0
    rejoined: int = 0

    def __post_init__(self) -> None:
        if self.visited_mask is None:
            self.visited_mask = np.zeros(self.shape, dtype=bool)
        if self.drawn is None:
            self.drawn = np.zeros(self.shape, dtype=bool)

    @property
    def restarts(self) -> int:
        return max(0, len(self.starts) - 1)

    def graph(self) -> NetworkGraph:
        return NetworkGraph.build(self.shape[1], self.shape[0], (), self.edges)


class MaxStepsExceeded(RuntimeError):
    def __init__(self, graph: NetworkGraph, report: TraceReport):
        super().__init__(f"delineation exceeded {report.steps} steps")
        self.graph = graph
        self.report = report


def link_window(a: Pixel, b: Pixel, k: int, shape: Tuple[int, int]) -> Window:
    """Bounding box of a and b dilated by (k-1)/2, clipped to the image."""
    half = (k - 1) // 2
    return (
        max(0, min(a[0], b[0]) - half),
        min(shape[0], max(a[0], b[0]) + half + 1),
        max(0, min(a[1], b[1]) - half),
        min(shape[1], max(a[1], b[1]) + half + 1),
    )


def step_cost(p: float, diagonal: bool) -> float:
    return (SQRT2 if diagonal else 1.0) * (1.0 - p + EPSILON)


def path_cost(probmap: ProbabilityMap, path: List[Pixel]) -> float:
    total = 0.0
    for a, b in zip(path[:-1], path[1:]):
        total += step_cost(float(probmap[b]), a[0] != b[0] and a[1] != b[1])
    return total


def link_shortest_path(probmap: ProbabilityMap, a: Pixel, b: Pixel, window: Window) -> List[Pixel]:
    """Minimum-cost 8-connected path a -> b inside window.

    Entering pixel q costs step_len * (1 - p(q) + EPSILON). The heap orders
    by (cost, row, col), so equal-cost frontiers expand row-major.
    """
    r0, r1, c0, c1 = window
    for p in (a, b):
        if not (r0 <= p[0] < r1 and c0 <= p[1] < c1):
            raise ValueError(f"point {p} outside window {window}")
    if a == b:
        return [a]
    sub = probmap[r0:r1, c0:c1].tolist()
    dist: Dict[Pixel, float] = {a: 0.0}
    prev: Dict[Pixel, Pixel] = {}
    done: Set[Pixel] = set()
    heap = [(0.0, a[0], a[1])]
    while heap:
        d, r, c = heapq.heappop(heap)
        if (r, c) in done:
            continue
        done.add((r, c))
        if (r, c) == b:
            break
        for dr, dc in _OFFSETS:
            rr, cc = r + dr, c + dc
            if not (r0 <= rr < r1 and c0 <= cc < c1) or (rr, cc) in done:
                continue
            nd = d + step_cost(sub[rr - r0][cc - c0], bool(dr and dc))
            if nd < dist.get((rr, cc), math.inf):
                dist[(rr, cc)] = nd
                prev[(rr, cc)] = (r, c)
                heapq.heappush(heap, (nd, rr, cc))
    path = [b]
    while path[-1] != a:
        path.append(prev[path[-1]])
    path.reverse()
    return path


def select_start(probmap: ProbabilityMap, state: TraceState, cfg: DelineationConfig) -> Optional[Pixel]:
    if not state.starts:
        i = int(np.argmax(probmap))
        if probmap.flat[i] <= 0.0:
            return None
        return divmod(i, probmap.shape[1])
    if state.visited_mask.any():
        dist = ndimage.distance_transform_edt(~state.visited_mask)
    else:
        dist = np.full(probmap.shape, np.inf)
    eligible = (dist > cfg.restart_distance()) & (probmap >= cfg.tau_restart)
    if not eligible.any():
        return None
    i = int(np.argmax(np.where(eligible, probmap, -1.0)))
    return divmod(i, probmap.shape[1])


def trace_report(state: TraceState) -> TraceReport:
    return TraceReport(
        steps=state.steps,
        restarts=state.restarts,
        starts=[list(p) for p in state.starts],
        visited=len(state.visited),
        edges=len(state.edges),
        bag_high_water=state.bag_high_water,
        discarded=state.discarded,
        snapped=state.snapped,
        rejoined=state.rejoined,
        tails=len(state.tips),
    )


class Delineator:
    """Single-run engine; create one per trace, it is not reusable or shareable mid-run."""

    def __init__(
        self,
        probmap: ProbabilityMap,
        oracle: ConnectivityOracle,
        cfg: DelineationConfig,
        on_step: Optional[Callable[[TraceState], None]] = None,
    ):
        self.probmap = as_probability_map(probmap)
        self.oracle = oracle
        self.cfg = cfg
        self.on_step = on_step
        self.state = TraceState(self.probmap.shape)

    def run(self) -> NetworkGraph:
        st = self.state
        limit = self.cfg.step_limit(st.shape)
        logger.info({"event": "trace_start", "height": st.shape[0], "width": st.shape[1], "max_steps": limit})
        while True:
            start = select_start(self.probmap, st, self.cfg)
            if start is None:
                break
            if st.starts:
                logger.info({"event": "trace_restart", "start": list(start), "restarts": len(st.starts)})
            st.starts.append(start)
            self._visit(start)
            self._expand(start, None)
            while st.bag:
                if st.steps >= limit:
                    logger.error({"event": "max_steps_exceeded", "steps": st.steps})
                    raise MaxStepsExceeded(st.graph(), trace_report(st))
                _, _, entry = heapq.heappop(st.bag)
                st.steps += 1
                if entry.location in st.visited_set:
                    st.rejoined += 1
                    self._link(entry.precedent, entry.location)
                else:
                    self._visit(entry.location)
                    self._link(entry.precedent, entry.location)
                    self._expand(entry.location, entry.precedent)
                logger.debug({"event": "trace_step", "step": st.steps, "bag": len(st.bag), "visited": len(st.visited)})
                if self.on_step is not None:
                    self.on_step(st)
        graph = st.graph()
        logger.info({"event": "trace_done", **trace_report(st).model_dump(exclude={"starts"})})
        return graph

    def _visit(self, p: Pixel) -> None:
        self.state.visited.append(p)
        self.state.visited_set.add(p)
        self.state.visited_mask[p] = True

    def _push(self, d: BorderDetection, precedent: Pixel) -> None:
        st = self.state
        entry = ExplorationEntry(d.location, d.confidence, precedent, st.insertions)
        heapq.heappush(st.bag, (-d.confidence, st.insertions, entry))
        st.insertions += 1
        st.bag_high_water = max(st.bag_high_water, len(st.bag))

    def _link(self, a: Pixel, b: Pixel) -> None:
        st = self.state
        key = (min(a, b), max(a, b))
        if a == b or key in st.linked:
            return
        window = link_window(a, b, self.cfg.oracle.k, st.shape)
        path = link_shortest_path(self.probmap, a, b, window)
        st.linked.add(key)
        st.edges.append(tuple(path))
        rows, cols = zip(*path)
        st.drawn[list(rows), list(cols)] = True

    def _visited_near(self, p: Pixel) -> List[Pixel]:
        r = self.cfg.r_nbhd
        r0, c0 = max(0, p[0] - r), max(0, p[1] - r)
        hits = np.argwhere(self.state.visited_mask[r0 : p[0] + r + 1, c0 : p[1] + r + 1])
        return [(int(a) + r0, int(b) + c0) for a, b in hits]

    def _expand(self, pc: Pixel, precedent: Optional[Pixel]) -> None:
        raw = self.oracle.predict(self.probmap, pc)
        kept = collapse_runs([d for d in raw if d.confidence >= self.cfg.tau_conf])
        for d in kept:
            near = [v for v in self._visited_near(d.location) if v != pc]
            if not near:
                self._push(d, pc)
            elif precedent is not None and precedent in near:
                self.state.discarded += 1
            else:
                pv = min(near, key=lambda v: ((v[0] - d.location[0]) ** 2 + (v[1] - d.location[1]) ** 2, v))
                self.state.snapped += 1
                self._link(pc, pv)
        if self.cfg.complete_tails:
            self._complete_tails(pc, [d.location for d in raw])

    def _complete_tails(self, pc: Pixel, exits: List[Pixel]) -> None:
        """Link structure in pc's component that never reaches the border square.

        Such pieces (road ends, short spurs) produce no exit; each is joined
        to pc at its geodesically farthest pixel.
        """
        st = self.state
        cfg = self.cfg.oracle
        r0, r1, c0, c1 = patch_bounds(pc, cfg.k, st.shape)
        fg = self.probmap[r0:r1, c0:c1] >= cfg.tau_occupancy
        center = (pc[0] - r0, pc[1] - c0)
        if not fg[center]:
            return
        labels, _ = label_components(fg)
        comp = labels == labels[center]
        away = ndimage.distance_transform_edt(~st.drawn[r0:r1, c0:c1]) > 2.0
        loose, count = label_components(comp & away)
        if count == 0:
            return
        geo = _geodesic(comp, center)
        for lab in range(1, count + 1):
            members = np.argwhere(loose == lab)
            absolute = members + (r0, c0)
            if any(np.max(np.abs(absolute - e), axis=1).min() <= self.cfg.r_nbhd for e in exits):
                continue
            depth = np.array([geo.get((int(a), int(b)), -1.0) for a, b in members])
            if depth.max() < 0:
                continue
            best = absolute[int(np.argmax(depth))]
            tip = (int(best[0]), int(best[1]))
            st.tips.append(tip)
            self._link(pc, tip)


def _geodesic(comp: np.ndarray, source: Pixel) -> Dict[Pixel, float]:
    """Path lengths from source through True pixels of comp (8-connected, Euclidean steps)."""
    dist: Dict[Pixel, float] = {source: 0.0}
    heap = [(0.0, source[0], source[1])]
    h, w = comp.shape
    while heap:
        d, r, c = heapq.heappop(heap)
        if d > dist.get((r, c), math.inf):
            continue
        for dr, dc in _OFFSETS:
            rr, cc = r + dr, c + dc
            if 0 <= rr < h and 0 <= cc < w and comp[rr, cc]:
                nd = d + (SQRT2 if dr and dc else 1.0)
                if nd < dist.get((rr, cc), math.inf):
                    dist[(rr, cc)] = nd
                    heapq.heappush(heap, (nd, rr, cc))
    return dist


def delineate(probmap: ProbabilityMap, oracle: ConnectivityOracle, cfg: DelineationConfig) -> NetworkGraph:
    return Delineator(probmap, oracle, cfg).run()


def threshold_skeleton_graph(probmap: ProbabilityMap, threshold: float) -> NetworkGraph:
    """Global-model baseline: skeleton of the thresholded probability map, vectorized."""
    return raster_to_graph(skeletonize(as_probability_map(probmap) >= threshold))
