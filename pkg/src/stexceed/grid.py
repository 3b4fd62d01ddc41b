"""Domain discretization into pixels plus polygon / convex-hull masking.

Pixels are retained by their CENTER point (even-odd rule, boundary-touching
centers count as inside). Retained centers are kept in row-major order by
(iy, ix); downstream region masks are index-aligned with that ordering.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import _kernels


class EmptyGridError(ValueError):
    """Masking removed every pixel center."""


class SelfIntersectingPolygonError(ValueError):
    """The polygon ring crosses itself."""


class DegenerateHullError(ValueError):
    """Fewer than three non-collinear points; no 2-D hull exists."""


@dataclass(frozen=True)
class PredictionGrid:
    rect: tuple[float, float, float, float]
    nx: int
    ny: int
    pixel_w: float
    pixel_h: float
    centers: np.ndarray  # (m, 2) retained pixel midpoints, row-major by (iy, ix)
    indices: np.ndarray  # (m, 2) integer (ix, iy) per retained center
    provenance: str = "rectangle"

    @property
    def m(self) -> int:
        return self.centers.shape[0]

    def points_at(self, t: float) -> np.ndarray:
        """Space-time points (x, y, t) for the retained centers."""
        pts = np.empty((self.m, 3), dtype=np.float64)
        pts[:, :2] = self.centers
        pts[:, 2] = t
        return pts


def make_grid(rect, nx: int, ny: int) -> PredictionGrid:
    """Uniform nx-by-ny pixel grid over a rectangle (x0, y0, x1, y1).

    The center of pixel (ix, iy) is ``(x0 + (ix + 1/2) w, y0 + (iy + 1/2) h)``.
    """
    x0, y0, x1, y1 = (float(v) for v in rect)
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"degenerate rectangle {rect}")
    nx = int(nx)
    ny = int(ny)
    if nx < 1 or ny < 1:
        raise ValueError("nx and ny must be at least 1")
    w = (x1 - x0) / nx
    h = (y1 - y0) / ny
    ix, iy = np.meshgrid(np.arange(nx), np.arange(ny))  # row-major: iy outer
    ix = ix.ravel()
    iy = iy.ravel()
    centers = np.column_stack([x0 + (ix + 0.5) * w, y0 + (iy + 0.5) * h])
    indices = np.column_stack([ix, iy]).astype(np.int64)
    return PredictionGrid(rect=(x0, y0, x1, y1), nx=nx, ny=ny, pixel_w=w,
                          pixel_h=h, centers=centers, indices=indices)


def _as_ring(polygon) -> np.ndarray:
    ring = np.asarray(polygon, dtype=np.float64)
    if ring.ndim != 2 or ring.shape[1] != 2 or ring.shape[0] < 3:
        raise ValueError("polygon must be an (n >= 3, 2) ring of vertices")
    if not np.all(np.isfinite(ring)):
        raise ValueError("polygon vertices must be finite")
    # drop an explicitly repeated closing vertex
    if np.array_equal(ring[0], ring[-1]):
        ring = ring[:-1]
    if ring.shape[0] < 3:
        raise ValueError("polygon must have at least 3 distinct vertices")
    return np.ascontiguousarray(ring)


def _segments_properly_intersect(p1, p2, p3, p4) -> bool:
    def orient(a, b, c):
        v = float((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
        return (v > 0) - (v < 0)

    d1 = orient(p3, p4, p1)
    d2 = orient(p3, p4, p2)
    d3 = orient(p1, p2, p3)
    d4 = orient(p1, p2, p4)
    return d1 * d2 < 0 and d3 * d4 < 0


def _check_simple(ring: np.ndarray) -> None:
    nv = ring.shape[0]
    edges = [(ring[i], ring[(i + 1) % nv]) for i in range(nv)]
    for i in range(nv):
        for j in range(i + 1, nv):
            adjacent = j == i + 1 or (i == 0 and j == nv - 1)
            if adjacent:
                continue
            if _segments_properly_intersect(*edges[i], *edges[j]):
                raise SelfIntersectingPolygonError(
                    f"edges {i} and {j} of the polygon cross")


def _mask(grid: PredictionGrid, keep: np.ndarray, provenance: str) -> PredictionGrid:
    if not np.any(keep):
        raise EmptyGridError("no pixel centers remain after masking")
    return replace(grid, centers=grid.centers[keep], indices=grid.indices[keep],
                   provenance=provenance)


def mask_polygon(grid: PredictionGrid, polygon) -> PredictionGrid:
    """Retain pixels whose center lies inside the (simple) polygon."""
    ring = _as_ring(polygon)
    _check_simple(ring)
    keep = _kernels.points_in_polygon(np.ascontiguousarray(grid.centers), ring)
    return _mask(grid, keep, "polygon")


def convex_hull(points) -> np.ndarray:
    """Convex hull by Andrew's monotone chain, returned CCW without repeats."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
        raise DegenerateHullError("need at least 3 points for a hull")
    uniq = sorted({(float(x), float(y)) for x, y in pts})
    if len(uniq) < 3:
        raise DegenerateHullError("need at least 3 distinct points for a hull")

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower = []
    for p in uniq:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper = []
    for p in reversed(uniq):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise DegenerateHullError("points are collinear; hull is degenerate")
    return np.array(hull, dtype=np.float64)


def mask_convex_hull(grid: PredictionGrid, points) -> PredictionGrid:
    """Retain pixels whose center lies within the convex hull of the sites."""
    hull = convex_hull(points)
    keep = _kernels.points_in_polygon(np.ascontiguousarray(grid.centers), hull)
    return _mask(grid, keep, "convex-hull")
