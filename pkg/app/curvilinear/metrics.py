"""Topology evaluation: boundary precision/recall, connectivity C, F^R and F^C."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from sklearn.neighbors import KDTree

from .graph import (
    NetworkGraph,
    Segment,
    extract_segments,
    graph_shortest_path,
    graph_to_raster,
    nearest_graph_point,
    polyline_length,
)
from .raster import BinaryMask, Pixel
from app.logging_utils import get_logger

logger = get_logger(__name__)


class EvalConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    d_match: float = Field(default=2.0, ge=0.0, description="boundary match tolerance (px)")
    connectivity_ratio: float = Field(default=0.8, gt=0.0, le=1.0)
    d_near: float = Field(default=10.0, gt=0.0, description="junction-to-prediction gating distance (px)")
    symmetric_ratio: bool = Field(default=False, description="use min/max of the length ratio")


@dataclass(frozen=True)
class SegmentOutcome:
    index: int
    endpoints: Tuple[Pixel, Pixel]
    gt_length: float
    pred_length: Optional[float]
    ratio: Optional[float]
    ok: bool
    reason: str


@dataclass(frozen=True)
class EvalResult:
    precision: float
    recall: float
    connectivity: float
    f_r: float
    f_c: float
    segments_total: int
    segments_ok: int
    segments: List[SegmentOutcome] = field(default_factory=list)


def f_measure(a: float, b: float) -> float:
    if a + b == 0:
        return 0.0
    return 2.0 * a * b / (a + b)


def boundary_pr(pred: BinaryMask, gt: BinaryMask, d_match: float) -> Tuple[float, float]:
    """Precision/recall of pixel sets under one-to-one matching within d_match.

    Matching is greedy in increasing distance (ties: pred then gt row-major),
    an approximation of optimal bipartite correspondence.
    """
    if pred.shape != gt.shape:
        raise ValueError(f"dimension mismatch: pred {pred.shape} vs gt {gt.shape}")
    p_pts = np.argwhere(pred)
    g_pts = np.argwhere(gt)
    if len(p_pts) == 0 and len(g_pts) == 0:
        return 1.0, 1.0
    if len(p_pts) == 0:
        return 1.0, 0.0
    if len(g_pts) == 0:
        return 0.0, 1.0
    tree = KDTree(g_pts)
    # pad the radius so float rounding never drops a pair exactly at d_match
    neighbours = tree.query_radius(p_pts, r=d_match + 1e-9)
    limit = d_match * d_match + 1e-9
    pairs = []
    for i, js in enumerate(neighbours):
        for j in js:
            d2 = int(((p_pts[i] - g_pts[j]) ** 2).sum())
            if d2 <= limit:
                pairs.append((d2, i, int(j)))
    pairs.sort()
    used_p, used_g = set(), set()
    for _, i, j in pairs:
        if i not in used_p and j not in used_g:
            used_p.add(i)
            used_g.add(j)
    matched = len(used_p)
    return matched / len(p_pts), matched / len(g_pts)


def _probes(seg: Segment) -> Tuple[Pixel, Pixel, float]:
    """Probe points and ground-truth length; a closed loop is probed to its halfway point."""
    if not seg.closed:
        return seg.endpoints[0], seg.endpoints[1], seg.length
    mid = len(seg.path) // 2
    return seg.path[0], seg.path[mid], polyline_length(seg.path[: mid + 1])


def _check_segment(index: int, seg: Segment, pred: NetworkGraph, cfg: EvalConfig) -> SegmentOutcome:
    a, b, gt_len = _probes(seg)

    def fail(reason: str, pred_len: Optional[float] = None) -> SegmentOutcome:
        return SegmentOutcome(index, seg.endpoints, seg.length, pred_len, None, False, reason)

    if pred.is_empty() or len(pred.points) == 0:
        return fail("empty_prediction")
    qa, da = nearest_graph_point(pred, a)
    qb, db = nearest_graph_point(pred, b)
    if da > cfg.d_near or db > cfg.d_near:
        return fail("far")
    path = graph_shortest_path(pred, qa, qb)
    if path is None:
        return fail("disconnected")
    pred_len = polyline_length(path)
    if pred_len == 0.0 and gt_len > 0.0:
        return fail("degenerate", pred_len)
    ratio = gt_len / pred_len
    if cfg.symmetric_ratio:
        ratio = min(ratio, 1.0 / ratio)
    ok = ratio > cfg.connectivity_ratio
    return SegmentOutcome(index, seg.endpoints, seg.length, pred_len, ratio, ok, "ok" if ok else "ratio")


def connectivity(pred: NetworkGraph, gt: NetworkGraph, cfg: EvalConfig) -> Tuple[float, List[SegmentOutcome]]:
    segments = extract_segments(gt)
    if not segments:
        return (1.0 if pred.is_empty() else 0.0), []
    outcomes = [_check_segment(i, seg, pred, cfg) for i, seg in enumerate(segments)]
    ok = sum(1 for o in outcomes if o.ok)
    return ok / len(outcomes), outcomes


def evaluate(pred: NetworkGraph, gt: NetworkGraph, cfg: EvalConfig) -> EvalResult:
    if (pred.width, pred.height) != (gt.width, gt.height):
        raise ValueError(
            f"dimension mismatch: pred {pred.width}x{pred.height} vs gt {gt.width}x{gt.height}"
        )
    pred_mask = graph_to_raster(pred, pred.width, pred.height)
    gt_mask = graph_to_raster(gt, gt.width, gt.height)
    precision, recall = boundary_pr(pred_mask, gt_mask, cfg.d_match)
    c, outcomes = connectivity(pred, gt, cfg)
    result = EvalResult(
        precision=precision,
        recall=recall,
        connectivity=c,
        f_r=f_measure(precision, recall),
        f_c=f_measure(precision, c),
        segments_total=len(outcomes),
        segments_ok=sum(1 for o in outcomes if o.ok),
        segments=outcomes,
    )
    logger.debug({"event": "eval_done", "P": precision, "R": recall, "C": c})
    return result
