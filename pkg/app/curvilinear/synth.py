"""Seeded synthetic road-like scenes: ground-truth graphs, masks and corrupted probability maps."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import ndimage

from app.logging_utils import get_logger

from .graph import NetworkGraph, graph_to_raster, polyline_length
from .prng import SplitMix64
from .raster import BinaryMask, Pixel, ProbabilityMap, bresenham, in_bounds, label_components

logger = get_logger(__name__)

MAX_TURN = math.pi / 6
BRANCH_MIN = math.pi / 4
BRANCH_MAX = math.pi / 2
COLLISION_RADIUS = 2
JUNCTION_CLEARANCE = 6.0
GAP_CEILING = 0.1
CLUTTER_FLOOR = 0.8
CORRUPTION_SALT = 0xC0FFEE


class SynthError(ValueError):
    pass


class CorruptionParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    blur_radius: int = Field(default=0, ge=0)
    noise_amp: float = Field(default=0.0, ge=0.0, le=1.0)
    gap_count: int = Field(default=0, ge=0)
    gap_len: int = Field(default=7, ge=1)
    clutter_count: int = Field(default=0, ge=0)


class SynthParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    seed: int = Field(default=0, ge=0, lt=1 << 64)
    width: int = Field(default=256, ge=64)
    height: int = Field(default=256, ge=64)
    n_seeds: int = Field(default=2, ge=1, description="walkers leaving each component's seed point")
    branch_prob: float = Field(default=0.05, ge=0.0, le=1.0)
    step_len: int = Field(default=8, ge=2)
    n_components: int = Field(default=1, ge=0)
    walk_steps: int = Field(default=12, ge=1, description="steps per walker")
    max_branches: int = Field(default=4, ge=0, description="per component")
    min_branch_len: Optional[int] = Field(default=None, ge=1, description="shorter end spurs are pruned; default 3 * step_len")
    max_retries: int = Field(default=50, ge=1)
    corruption: CorruptionParams = Field(default_factory=CorruptionParams)

    @property
    def separation(self) -> float:
        return 2.0 * self.step_len

    @property
    def spur_limit(self) -> float:
        return float(self.min_branch_len if self.min_branch_len is not None else 3 * self.step_len)


@dataclass
class _Tree:
    vertices: List[Pixel] = field(default_factory=list)
    links: List[Tuple[int, int, Tuple[Pixel, ...]]] = field(default_factory=list)

    def degree(self) -> Dict[int, int]:
        deg = {i: 0 for i in range(len(self.vertices))}
        for a, b, _ in self.links:
            deg[a] += 1
            deg[b] += 1
        return deg


@dataclass
class _Walker:
    vertex: int
    heading: float
    steps_left: int


def _step_clear(
    pixels: List[Pixel],
    origin: Pixel,
    comp: BinaryMask,
    others_dist: np.ndarray,
    separation: float,
) -> bool:
    h, w = comp.shape
    for q in pixels[1:]:
        if not in_bounds(q, (h, w)):
            return False
        if others_dist[q] <= separation:
            return False
        if math.hypot(q[0] - origin[0], q[1] - origin[1]) <= JUNCTION_CLEARANCE:
            continue
        r0, c0 = max(0, q[0] - COLLISION_RADIUS), max(0, q[1] - COLLISION_RADIUS)
        if comp[r0 : q[0] + COLLISION_RADIUS + 1, c0 : q[1] + COLLISION_RADIUS + 1].any():
            return False
    return True


def _grow(rng: SplitMix64, params: SynthParams, seed_pt: Pixel, others_dist: np.ndarray) -> _Tree:
    shape = (params.height, params.width)
    comp = np.zeros(shape, dtype=bool)
    comp[seed_pt] = True
    tree = _Tree(vertices=[seed_pt])
    base = rng.angle()
    queue = [
        _Walker(0, base + 2.0 * math.pi * i / params.n_seeds, params.walk_steps)
        for i in range(params.n_seeds)
    ]
    branches = 0
    while queue:
        walker = queue.pop(0)
        while walker.steps_left > 0:
            walker.steps_left -= 1
            walker.heading += rng.uniform(-MAX_TURN, MAX_TURN)
            origin = tree.vertices[walker.vertex]
            target = (
                int(round(origin[0] - params.step_len * math.sin(walker.heading))),
                int(round(origin[1] + params.step_len * math.cos(walker.heading))),
            )
            pixels = bresenham(origin, target)
            if not _step_clear(pixels, origin, comp, others_dist, params.separation):
                break
            for q in pixels:
                comp[q] = True
            tree.vertices.append(target)
            tree.links.append((walker.vertex, len(tree.vertices) - 1, tuple(pixels)))
            walker.vertex = len(tree.vertices) - 1
            if branches < params.max_branches and rng.random() < params.branch_prob:
                side = 1.0 if rng.random() < 0.5 else -1.0
                turn = side * rng.uniform(BRANCH_MIN, BRANCH_MAX)
                queue.append(_Walker(walker.vertex, walker.heading + turn, walker.steps_left))
                branches += 1
    return tree


def _prune_spurs(tree: _Tree, limit: float) -> _Tree:
    """Drop endpoint chains shorter than limit that hang off a junction."""
    links = list(tree.links)
    while True:
        deg: Dict[int, int] = {}
        for a, b, _ in links:
            deg[a] = deg.get(a, 0) + 1
            deg[b] = deg.get(b, 0) + 1
        incident: Dict[int, List[int]] = {}
        for i, (a, b, _) in enumerate(links):
            incident.setdefault(a, []).append(i)
            incident.setdefault(b, []).append(i)
        doomed: Optional[List[int]] = None
        for v in sorted(deg):
            if deg[v] != 1:
                continue
            chain, length, cur, li = [], 0.0, v, incident[v][0]
            while True:
                chain.append(li)
                a, b, px = links[li]
                length += polyline_length(px)
                cur = b if a == cur else a
                if deg[cur] != 2:
                    break
                li = next(j for j in incident[cur] if j != li)
            if deg[cur] >= 3 and length < limit:
                doomed = chain
                break
        if doomed is None:
            return _Tree(tree.vertices, links)
        links = [l for i, l in enumerate(links) if i not in set(doomed)]


def _to_edges(tree: _Tree) -> Tuple[List[Pixel], List[List[Pixel]]]:
    """Merge chains through degree-2 vertices into single pixel polylines."""
    deg = {}
    for a, b, _ in tree.links:
        deg[a] = deg.get(a, 0) + 1
        deg[b] = deg.get(b, 0) + 1
    incident: Dict[int, List[int]] = {}
    for i, (a, b, _) in enumerate(tree.links):
        incident.setdefault(a, []).append(i)
        incident.setdefault(b, []).append(i)
    used = [False] * len(tree.links)
    edges: List[List[Pixel]] = []
    for v in sorted(deg):
        if deg[v] == 2:
            continue
        for li in incident[v]:
            if used[li]:
                continue
            path: List[Pixel] = [tree.vertices[v]]
            cur = v
            while True:
                used[li] = True
                a, b, px = tree.links[li]
                pts = list(px) if a == cur else list(px)[::-1]
                path.extend(pts[1:])
                cur = b if a == cur else a
                if deg[cur] != 2:
                    break
                li = next(j for j in incident[cur] if not used[j])
            edges.append(path)
    nodes = [tree.vertices[v] for v in sorted(deg) if deg[v] != 2]
    return nodes, edges


def generate_network(params: SynthParams) -> Tuple[NetworkGraph, BinaryMask]:
    """Grow n_components disjoint random-walk trees, rasterize them and return (graph, mask)."""
    shape = (params.height, params.width)
    rng = SplitMix64(params.seed)
    occupied = np.zeros(shape, dtype=bool)
    nodes: List[Pixel] = []
    edges: List[List[Pixel]] = []
    margin = params.step_len
    for index in range(params.n_components):
        others_dist = (
            ndimage.distance_transform_edt(~occupied) if occupied.any() else np.full(shape, np.inf)
        )
        for attempt in range(params.max_retries):
            seed_pt = (
                margin + rng.randbelow(params.height - 2 * margin),
                margin + rng.randbelow(params.width - 2 * margin),
            )
            if others_dist[seed_pt] <= params.separation:
                continue
            tree = _prune_spurs(_grow(rng, params, seed_pt, others_dist), params.spur_limit)
            if not tree.links:
                continue
            comp_nodes, comp_edges = _to_edges(tree)
            if sum(polyline_length(e) for e in comp_edges) < 2 * params.step_len:
                continue
            nodes.extend(comp_nodes)
            edges.extend(comp_edges)
            for e in comp_edges:
                rows, cols = zip(*e)
                occupied[list(rows), list(cols)] = True
            logger.debug({"event": "component_grown", "index": index, "attempt": attempt, "edges": len(comp_edges)})
            break
        else:
            raise SynthError(
                f"could not place component {index} with separation {params.separation:g} "
                f"after {params.max_retries} attempts"
            )
    graph = NetworkGraph.build(params.width, params.height, nodes, edges)
    return graph, graph_to_raster(graph, params.width, params.height)


def component_clearance(mask: BinaryMask) -> List[float]:
    """Per component, in label order: the largest distance from one of its pixels to any other component.

    A restart reaches a component only where this exceeds d_restart.
    """
    labels, count = label_components(mask)
    out: List[float] = []
    for lab in range(1, count + 1):
        others = mask & (labels != lab)
        if not others.any():
            out.append(math.inf)
            continue
        dist = ndimage.distance_transform_edt(~others)
        out.append(float(dist[labels == lab].max()))
    return out



def _gap_run(mask: BinaryMask, start: Pixel, length: int) -> List[Pixel]:
    """First `length` structure pixels reached by breadth-first search from start."""
    run, seen, frontier = [start], {start}, [start]
    while frontier and len(run) < length:
        nxt = []
        for p in frontier:
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    q = (p[0] + dr, p[1] + dc)
                    if q not in seen and in_bounds(q, mask.shape) and mask[q]:
                        seen.add(q)
                        nxt.append(q)
        nxt.sort()
        run.extend(nxt[: length - len(run)])
        frontier = nxt
    return run


def _place_clutter(rng: SplitMix64, blocked: BinaryMask, step_len: int, retries: int) -> Optional[List[Pixel]]:
    h, w = blocked.shape
    clearance = ndimage.distance_transform_edt(~blocked) if blocked.any() else np.full(blocked.shape, np.inf)
    for _ in range(retries):
        a = (rng.randbelow(h), rng.randbelow(w))
        heading = rng.angle()
        length = rng.uniform(step_len, 3 * step_len)
        b = (
            int(round(a[0] - length * math.sin(heading))),
            int(round(a[1] + length * math.cos(heading))),
        )
        if not in_bounds(b, (h, w)):
            continue
        stroke = bresenham(a, b)
        if all(clearance[p] > 3.0 for p in stroke):
            return stroke
    return None


def corrupt(mask: BinaryMask, params: SynthParams) -> ProbabilityMap:
    """Turn a ground-truth mask into an imperfect global-model probability map.

    Steps, in order: box blur (rescaled so on-structure pixels sit at 1),
    uniform noise, gaps carved along the structure, off-structure clutter
    strokes, clamp to [0, 1].
    """
    cp = params.corruption
    mask = np.asarray(mask, dtype=bool)
    rng = SplitMix64(params.seed ^ CORRUPTION_SALT)
    prob = mask.astype(np.float64)
    if cp.blur_radius > 0 and mask.any():
        blurred = ndimage.uniform_filter(prob, size=2 * cp.blur_radius + 1, mode="constant")
        prob = np.minimum(1.0, blurred / float(np.median(blurred[mask])))
    if cp.noise_amp > 0:
        noise = np.array([rng.uniform(-cp.noise_amp, cp.noise_amp) for _ in range(prob.size)])
        prob = prob + noise.reshape(prob.shape)
    structure = [tuple(int(v) for v in p) for p in np.argwhere(mask)]
    if structure:
        for _ in range(cp.gap_count):
            start = structure[rng.randbelow(len(structure))]
            gap = np.zeros(mask.shape, dtype=bool)
            for p in _gap_run(mask, start, cp.gap_len):
                gap[p] = True
            if cp.blur_radius > 0:
                gap = ndimage.binary_dilation(gap, structure=np.ones((3, 3), dtype=bool), iterations=cp.blur_radius)
            prob[gap] = np.minimum(prob[gap], GAP_CEILING)
    blocked = mask.copy()
    for i in range(cp.clutter_count):
        stroke = _place_clutter(rng, blocked, params.step_len, params.max_retries)
        if stroke is None:
            logger.warning({"event": "clutter_skipped", "index": i})
            continue
        level = rng.uniform(CLUTTER_FLOOR, 1.0)
        for p in stroke:
            prob[p] = level
            blocked[p] = True
    return np.clip(prob, 0.0, 1.0)
