"""Shared oracle helpers: rasterization and point-in-polygon independent of
the production geometry path (crossing-number test, no shapely booleans)."""

import numpy as np
import pytest


def ring_contains(points: np.ndarray, ring: np.ndarray) -> np.ndarray:
    """Crossing-number membership of points in a simple closed ring.

    points: (N, 2); ring: (M, 2) open ring. Vectorized over points.
    """
    x, y = points[:, 0], points[:, 1]
    inside = np.zeros(len(points), dtype=bool)
    m = len(ring)
    for i in range(m):
        x1, y1 = ring[i]
        x2, y2 = ring[(i + 1) % m]
        if y1 == y2:
            continue
        cond = (y1 > y) != (y2 > y)
        xin = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= cond & (x < xin)
    return inside


def region_membership(points: np.ndarray, region) -> np.ndarray:
    """Oracle membership of points in a GroundRegion (even-odd per polygon)."""
    out = np.zeros(len(points), dtype=bool)
    for poly in region.polygons():
        acc = ring_contains(points, np.asarray(poly.exterior.coords)[:-1])
        for hole in poly.interiors:
            acc &= ~ring_contains(points, np.asarray(hole.coords)[:-1])
        out |= acc
    return out


def grid_points(bounds, cell: float) -> np.ndarray:
    """Cell-center grid covering bounds = (xmin, ymin, xmax, ymax)."""
    xmin, ymin, xmax, ymax = bounds
    xs = np.arange(xmin + cell / 2, xmax, cell)
    ys = np.arange(ymin + cell / 2, ymax, cell)
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])


def raster_area(mask: np.ndarray, cell: float) -> float:
    return float(mask.sum()) * cell * cell


def raster_centroid(points: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return points[mask].mean(axis=0)


def bounds_of(*regions, pad: float = 0.01):
    xs, ys = [], []
    for r in regions:
        for poly in r.polygons():
            b = poly.bounds
            xs += [b[0], b[2]]
            ys += [b[1], b[3]]
    return min(xs) - pad, min(ys) - pad, max(xs) + pad, max(ys) + pad


def random_convex_region(rng, center, scale, n_pts=8, tag="exact"):
    from setsearch.geometry import GroundRegion, convex_hull

    pts = center + rng.uniform(-scale, scale, size=(n_pts, 2))
    hull = convex_hull(pts)
    assert hull is not None
    return GroundRegion.from_convex(hull, tag)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
