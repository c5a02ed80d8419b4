"""Dense grid types and pixel-level algorithms.

Rasters are plain numpy arrays of shape ``(height, width)`` indexed
``[row, col]``: a probability map is float64 in [0, 1], a mask is bool.
Pixel coordinates are ``(row, col)`` tuples; every ordering and tie-break in
the package is row-major on them.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np
import numpy.typing as npt
from scipy import ndimage
from skimage import morphology

Pixel = Tuple[int, int]
ProbabilityMap = npt.NDArray[np.float64]
BinaryMask = npt.NDArray[np.bool_]

# 8-connectivity structuring element
EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class BorderDetection:
    """A patch-border location (absolute image coordinates) and its confidence."""

    location: Pixel
    confidence: float


def as_probability_map(values: npt.ArrayLike) -> ProbabilityMap:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"probability map must be a non-empty 2-D grid, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("probability map values must lie in [0, 1]")
    return arr


def as_mask(values: npt.ArrayLike) -> BinaryMask:
    arr = np.asarray(values, dtype=bool)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"mask must be a non-empty 2-D grid, got shape {arr.shape}")
    return arr


def in_bounds(p: Pixel, shape: Tuple[int, int]) -> bool:
    return 0 <= p[0] < shape[0] and 0 <= p[1] < shape[1]


def chebyshev(a: Pixel, b: Pixel) -> int:
    return max(abs(a[0] - b[0]), abs(a[1] - b[1]))


def patch_bounds(center: Pixel, k: int, shape: Tuple[int, int]) -> Tuple[int, int, int, int]:
    """Half-open ``(r0, r1, c0, c1)`` of the k×k window on center, clipped to the image."""
    if k < 1 or k % 2 == 0:
        raise ValueError(f"patch side must be an odd positive integer, got {k}")
    half = (k - 1) // 2
    r, c = center
    return (
        max(0, r - half),
        min(shape[0], r + half + 1),
        max(0, c - half),
        min(shape[1], c + half + 1),
    )


def square_perimeter(center: Pixel, s: int, shape: Tuple[int, int]) -> List[Pixel]:
    """In-bounds pixels at Chebyshev distance (s-1)/2 from center, row-major."""
    half = (s - 1) // 2
    r, c = center
    out: List[Pixel] = []
    for rr in range(r - half, r + half + 1):
        if rr < 0 or rr >= shape[0]:
            continue
        if rr in (r - half, r + half):
            cols: Iterable[int] = range(c - half, c + half + 1)
        else:
            cols = (c - half, c + half)
        out.extend((rr, cc) for cc in cols if 0 <= cc < shape[1])
    return out


def label_components(mask: BinaryMask) -> Tuple[np.ndarray, int]:
    labels, count = ndimage.label(mask, structure=EIGHT_CONNECTED)
    return labels, int(count)


def count_components(mask: BinaryMask) -> int:
    return label_components(mask)[1]


def _keep_vanished_components(mask: BinaryMask, thin: BinaryMask) -> BinaryMask:
    """Give every input component that thinning erased back its row-major-first pixel."""
    labels, count = label_components(mask)
    if count == 0:
        return thin
    survivors = np.bincount(labels[thin], minlength=count + 1)
    vanished = np.flatnonzero(survivors[1:] == 0) + 1
    if vanished.size == 0:
        return thin
    thin = thin.copy()
    flat = labels.ravel()
    for lab in vanished:
        thin.flat[int(np.flatnonzero(flat == lab)[0])] = True
    return thin


def skeletonize(mask: BinaryMask) -> BinaryMask:
    """Zhang-Suen thinning to a 1-px 8-connected skeleton.

    Output is a subset of the input and keeps the component count: a
    component the thinning erases entirely keeps its row-major-first pixel.
    """
    img = as_mask(mask)
    if not img.any():
        return np.zeros_like(img)
    thin = morphology.skeletonize(img, method="zhang").astype(bool)
    return _keep_vanished_components(img, thin & img)


def render_heatmap(locations: Sequence[Pixel], sigma: float, width: int, height: int) -> ProbabilityMap:
    """Unit-height Gaussians on each location, combined by max."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    out = np.zeros((height, width), dtype=np.float64)
    rows = np.arange(height, dtype=np.float64)[:, None]
    cols = np.arange(width, dtype=np.float64)[None, :]
    for r, c in locations:
        if not in_bounds((r, c), (height, width)):
            raise ValueError(f"location {(r, c)} outside {height}x{width} grid")
        d2 = (rows - r) ** 2 + (cols - c) ** 2
        np.maximum(out, np.exp(-d2 / (2.0 * sigma * sigma)), out=out)
    return np.minimum(out, 1.0)


def extract_peaks(heatmap: ProbabilityMap, threshold: float, min_separation: int) -> List[BorderDetection]:
    """Greedy non-maximum suppression of local maxima at or above threshold."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    hm = np.asarray(heatmap, dtype=np.float64)
    local_max = hm >= ndimage.maximum_filter(hm, size=3, mode="constant", cval=-np.inf)
    cand = np.argwhere(local_max & (hm >= threshold) & (hm > 0.0))
    values = hm[cand[:, 0], cand[:, 1]] if len(cand) else np.empty(0)
    # stable sort keeps row-major order among equal values
    order = np.argsort(-values, kind="stable")
    picked: List[BorderDetection] = []
    for i in order:
        loc = (int(cand[i, 0]), int(cand[i, 1]))
        if all(chebyshev(loc, d.location) > min_separation for d in picked):
            picked.append(BorderDetection(loc, float(values[i])))
    return picked


def bresenham(a: Pixel, b: Pixel) -> List[Pixel]:
    """Bresenham line from a to b inclusive; the pixel set does not depend on direction."""
    if b < a:
        return bresenham(b, a)[::-1]
    r0, c0 = a
    r1, c1 = b
    dr, dc = abs(r1 - r0), abs(c1 - c0)
    sr = 1 if r1 >= r0 else -1
    sc = 1 if c1 >= c0 else -1
    err = dc - dr
    r, c = r0, c0
    out = [(r, c)]
    while (r, c) != (r1, c1):
        e2 = 2 * err
        if e2 > -dr:
            err -= dr
            c += sc
        if e2 < dc:
            err += dc
            r += sr
        out.append((r, c))
    return out


def rasterize_segment(a: Pixel, b: Pixel, mask: BinaryMask) -> None:
    for p in (a, b):
        if not in_bounds(p, mask.shape):
            raise ValueError(f"segment endpoint {p} outside {mask.shape[0]}x{mask.shape[1]} grid")
    for r, c in bresenham(a, b):
        mask[r, c] = True
