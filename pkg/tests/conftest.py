import sys
import os
import numpy as np
import pytest

# Ensure project root is on sys.path so 'app' package resolves
ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from app.curvilinear.graph import NetworkGraph  # noqa: E402


def mask_from_points(points, height, width):
    mask = np.zeros((height, width), dtype=bool)
    for r, c in points:
        mask[r, c] = True
    return mask


def hline(row, c0, c1):
    return [(row, c) for c in range(c0, c1 + 1)]


def vline(col, r0, r1):
    return [(r, col) for r in range(r0, r1 + 1)]


@pytest.fixture
def cross_mask():
    """'+' of two 9-px lines crossing at (4, 4) on a 9x9 grid."""
    return mask_from_points(hline(4, 0, 8) + vline(4, 0, 8), 9, 9)


@pytest.fixture
def y_graph():
    """Junction at (20, 20) with arms up, down-left and right (each >= 10 px)."""
    up = [(r, 20) for r in range(20, 7, -1)]
    left = [(20 + i, 20 - i) for i in range(0, 11)]
    right = [(20, c) for c in range(20, 33)]
    return NetworkGraph.build(40, 40, [], [up, left, right])


@pytest.fixture
def line_scene():
    """Clean horizontal line on row 32, cols 5..120 of a 64x128 map."""
    mask = mask_from_points(hline(32, 5, 120), 64, 128)
    return mask, mask.astype(np.float64)
