"""Patch-connectivity oracles and patch ground-truth construction.

An oracle maps a patch centred on a structure pixel to the locations on the
border square that are connected to the centre. Two classical
implementations are provided (ground-truth skeleton, thresholded probability
map); a learned model plugs in through the same protocol, and the heatmap
codec in :mod:`.raster` produces its training targets.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Protocol, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .metrics import f_measure
from .prng import SplitMix64
from .raster import (
    BinaryMask,
    BorderDetection,
    Pixel,
    ProbabilityMap,
    as_mask,
    chebyshev,
    in_bounds,
    label_components,
    patch_bounds,
    square_perimeter,
)

__all__ = [
    "BorderDetection",
    "CenterOffStructure",
    "ConnectivityOracle",
    "GroundTruthOracle",
    "OracleConfig",
    "PatchScore",
    "ProbabilityMapOracle",
    "collapse_runs",
    "evaluate_oracle",
    "oracle_ground_truth",
    "oracle_probmap",
    "patch_ground_truth",
    "sample_centers",
]

SNAP_RADIUS = 2


class CenterOffStructure(ValueError):
    pass


class OracleConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    k: int = Field(default=33, description="patch side (odd)")
    s: Optional[int] = Field(default=None, description="border-square side (odd, < k); default k - 4")
    tau_occupancy: float = Field(default=0.5, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _check_sides(self) -> "OracleConfig":
        if self.k < 5 or self.k % 2 == 0:
            raise ValueError(f"k must be an odd integer >= 5, got {self.k}")
        s = self.border_side
        if s % 2 == 0 or not 3 <= s < self.k:
            raise ValueError(f"s must be odd with 3 <= s < k, got s={s}, k={self.k}")
        return self

    @property
    def border_side(self) -> int:
        return self.s if self.s is not None else self.k - 4

    @property
    def half_patch(self) -> int:
        return (self.k - 1) // 2


def _snap(fg: BinaryMask, center: Pixel, origin: Pixel) -> Optional[Pixel]:
    """Foreground pixel nearest to center within Chebyshev SNAP_RADIUS (patch coordinates)."""
    cr, cc = center[0] - origin[0], center[1] - origin[1]
    r0, c0 = max(0, cr - SNAP_RADIUS), max(0, cc - SNAP_RADIUS)
    window = fg[r0 : cr + SNAP_RADIUS + 1, c0 : cc + SNAP_RADIUS + 1]
    pts = np.argwhere(window)
    if len(pts) == 0:
        return None
    pts = pts + (r0, c0)
    d2 = (pts[:, 0] - cr) ** 2 + (pts[:, 1] - cc) ** 2
    i = int(np.argmin(d2))
    return int(pts[i, 0]), int(pts[i, 1])


def _connected_border(fg: BinaryMask, origin: Pixel, center: Pixel, cfg: OracleConfig, shape: Tuple[int, int]) -> Optional[List[Pixel]]:
    """Border-square pixels in the centre's component; None when the centre is off structure."""
    seed = _snap(fg, center, origin)
    if seed is None:
        return None
    labels, _ = label_components(fg)
    comp = labels == labels[seed]
    out = []
    for r, c in square_perimeter(center, cfg.border_side, shape):
        if comp[r - origin[0], c - origin[1]]:
            out.append((r, c))
    return out


def _check_center(center: Pixel, shape: Tuple[int, int]) -> None:
    if not in_bounds(center, shape):
        raise ValueError(f"center {center} outside {shape[0]}x{shape[1]} grid")


def patch_ground_truth(gt_skeleton: BinaryMask, center: Pixel, cfg: OracleConfig) -> List[Pixel]:
    skel = as_mask(gt_skeleton)
    _check_center(center, skel.shape)
    r0, r1, c0, c1 = patch_bounds(center, cfg.k, skel.shape)
    found = _connected_border(skel[r0:r1, c0:c1], (r0, c0), center, cfg, skel.shape)
    if found is None:
        raise CenterOffStructure(f"center off structure: no skeleton pixel within {SNAP_RADIUS} px of {center}")
    return found


def oracle_ground_truth(gt_skeleton: BinaryMask, center: Pixel, cfg: OracleConfig) -> List[BorderDetection]:
    try:
        locations = patch_ground_truth(gt_skeleton, center, cfg)
    except CenterOffStructure:
        return []
    return [BorderDetection(p, 1.0) for p in locations]


def oracle_probmap(probmap: ProbabilityMap, center: Pixel, cfg: OracleConfig) -> List[BorderDetection]:
    _check_center(center, probmap.shape)
    r0, r1, c0, c1 = patch_bounds(center, cfg.k, probmap.shape)
    fg = probmap[r0:r1, c0:c1] >= cfg.tau_occupancy
    found = _connected_border(fg, (r0, c0), center, cfg, probmap.shape)
    if not found:
        return []
    return [BorderDetection(p, float(probmap[p])) for p in found]


class ConnectivityOracle(Protocol):
    """predict(context, center) -> detections; context is the probability map."""

    def predict(self, context: ProbabilityMap, center: Pixel) -> List[BorderDetection]: ...


class GroundTruthOracle:
    def __init__(self, gt_skeleton: BinaryMask, cfg: OracleConfig):
        self.gt_skeleton = as_mask(gt_skeleton)
        self.cfg = cfg

    def predict(self, context: ProbabilityMap, center: Pixel) -> List[BorderDetection]:
        return oracle_ground_truth(self.gt_skeleton, center, self.cfg)


class ProbabilityMapOracle:
    def __init__(self, cfg: OracleConfig):
        self.cfg = cfg

    def predict(self, context: ProbabilityMap, center: Pixel) -> List[BorderDetection]:
        return oracle_probmap(context, center, self.cfg)


def collapse_runs(detections: Sequence[BorderDetection]) -> List[BorderDetection]:
    """One detection per chain of mutually adjacent locations (Chebyshev 1).

    The representative is the most confident member; ties go to the member
    nearest the chain centroid, then row-major. Output is row-major.
    """
    remaining = sorted(detections, key=lambda d: d.location)
    out: List[BorderDetection] = []
    while remaining:
        run = [remaining.pop(0)]
        grew = True
        while grew:
            grew = False
            for d in list(remaining):
                if any(chebyshev(d.location, m.location) <= 1 for m in run):
                    run.append(d)
                    remaining.remove(d)
                    grew = True
        centroid = np.mean([m.location for m in run], axis=0)
        best = min(
            run,
            key=lambda m: (
                -m.confidence,
                float((m.location[0] - centroid[0]) ** 2 + (m.location[1] - centroid[1]) ** 2),
                m.location,
            ),
        )
        out.append(best)
    return sorted(out, key=lambda d: d.location)


def sample_centers(skeleton: BinaryMask, n: int, seed: int) -> List[Pixel]:
    """n distinct skeleton pixels drawn with SplitMix64 (partial Fisher-Yates), in draw order."""
    pts = [(int(r), int(c)) for r, c in np.argwhere(as_mask(skeleton))]
    rng = SplitMix64(seed)
    take = min(n, len(pts))
    for i in range(take):
        j = i + rng.randbelow(len(pts) - i)
        pts[i], pts[j] = pts[j], pts[i]
    return pts[:take]


@dataclass(frozen=True)
class PatchScore:
    patches: int
    detections: int
    ground_truth: int
    matched: int
    precision: float
    recall: float
    f: float


def _match_count(found: Sequence[Pixel], truth: Sequence[Pixel], tolerance: int) -> int:
    pairs = sorted(
        (chebyshev(a, b), i, j)
        for i, a in enumerate(found)
        for j, b in enumerate(truth)
        if chebyshev(a, b) <= tolerance
    )
    seen_a, seen_b = set(), set()
    for _, i, j in pairs:
        if i not in seen_a and j not in seen_b:
            seen_a.add(i)
            seen_b.add(j)
    return len(seen_a)


def evaluate_oracle(
    oracle: ConnectivityOracle,
    probmap: ProbabilityMap,
    gt_skeleton: BinaryMask,
    centers: Sequence[Pixel],
    cfg: OracleConfig,
    tolerance: int = 1,
) -> PatchScore:
    """Micro-averaged patch-level precision/recall of an oracle against patch ground truth."""
    patches = n_det = n_gt = matched = 0
    for center in centers:
        try:
            truth = patch_ground_truth(gt_skeleton, center, cfg)
        except CenterOffStructure:
            continue
        found = [d.location for d in oracle.predict(probmap, center)]
        patches += 1
        n_det += len(found)
        n_gt += len(truth)
        matched += _match_count(found, truth, tolerance)
    precision = matched / n_det if n_det else 1.0
    recall = matched / n_gt if n_gt else 1.0
    return PatchScore(patches, n_det, n_gt, matched, precision, recall, f_measure(precision, recall))
