"""Canny edge detection and branchless contour extraction.

The cleanup stage guarantees every on-pixel has at most two 8-connected
neighbors, so contour tracing never has to choose between branches.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .raster import Raster, _gaussian_blur_array


@dataclass(frozen=True)
class EdgeMap:
    on: np.ndarray  # bool, shape (h, w)

    @property
    def height(self) -> int:
        return self.on.shape[0]

    @property
    def width(self) -> int:
        return self.on.shape[1]


def _neighbor_count(on: np.ndarray) -> np.ndarray:
    """Number of on 8-neighbors per pixel."""
    p = np.pad(on.astype(np.int32), 1)
    c = np.zeros_like(p)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            c += np.roll(np.roll(p, dy, axis=0), dx, axis=1)
    return c[1:-1, 1:-1]


def canny(img: Raster, t_low: float = 0.2, t_high: float = 0.2,
          sigma: float = 1.0) -> EdgeMap:
    """Classic Canny; thresholds are fractions of the max gradient magnitude."""
    if img.channels != 1:
        raise ValueError("canny expects a 1-channel raster")
    if not (0.0 <= t_low <= t_high <= 1.0):
        raise ValueError("need 0 <= t_low <= t_high <= 1")
    data = _gaussian_blur_array(img.data, sigma)

    p = np.pad(data, 1, mode="edge")
    # Sobel
    gx = ((p[:-2, 2:] + 2 * p[1:-1, 2:] + p[2:, 2:])
          - (p[:-2, :-2] + 2 * p[1:-1, :-2] + p[2:, :-2]))
    gy = ((p[2:, :-2] + 2 * p[2:, 1:-1] + p[2:, 2:])
          - (p[:-2, :-2] + 2 * p[:-2, 1:-1] + p[:-2, 2:]))
    mag = np.hypot(gx, gy)
    peak = mag.max()
    if peak <= 0:
        return EdgeMap(np.zeros(data.shape, dtype=bool))

    # non-maximum suppression along 4 quantized gradient directions
    angle = np.mod(np.degrees(np.arctan2(gy, gx)), 180.0)
    m = np.pad(mag, 1)
    center = m[1:-1, 1:-1]
    nms = np.zeros(data.shape, dtype=bool)
    sectors = [
        ((angle < 22.5) | (angle >= 157.5), m[1:-1, 2:], m[1:-1, :-2]),   # E-W
        ((angle >= 22.5) & (angle < 67.5), m[2:, 2:], m[:-2, :-2]),       # NE-SW
        ((angle >= 67.5) & (angle < 112.5), m[2:, 1:-1], m[:-2, 1:-1]),   # N-S
        ((angle >= 112.5) & (angle < 157.5), m[2:, :-2], m[:-2, 2:]),     # NW-SE
    ]
    for sel, a, b in sectors:
        nms |= sel & (center >= a) & (center > b)
    nms &= mag > 0

    strong = nms & (mag >= t_high * peak)
    weak = nms & (mag >= t_low * peak)

    # hysteresis: BFS from strong pixels through weak ones
    out = strong.copy()
    h, w = out.shape
    queue = deque(zip(*np.nonzero(strong)))
    while queue:
        y, x = queue.popleft()
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                ny, nx = y + dy, x + dx
                if 0 <= ny < h and 0 <= nx < w and weak[ny, nx] and not out[ny, nx]:
                    out[ny, nx] = True
                    queue.append((ny, nx))
    return EdgeMap(out)


def _thin_zhang_suen(on: np.ndarray) -> np.ndarray:
    """Iterative pattern thinning to unit width (fixed point)."""
    img = on.copy()
    while True:
        changed = False
        for step in (0, 1):
            p = np.pad(img, 1).astype(np.uint8)
            p2 = p[:-2, 1:-1]   # N
            p3 = p[:-2, 2:]     # NE
            p4 = p[1:-1, 2:]    # E
            p5 = p[2:, 2:]      # SE
            p6 = p[2:, 1:-1]    # S
            p7 = p[2:, :-2]     # SW
            p8 = p[1:-1, :-2]   # W
            p9 = p[:-2, :-2]    # NW
            ring = [p2, p3, p4, p5, p6, p7, p8, p9]
            b = sum(ring)
            a = sum(((ring[i] == 0) & (ring[(i + 1) % 8] == 1)).astype(np.uint8)
                    for i in range(8))
            if step == 0:
                cond = (p2 * p4 * p6 == 0) & (p4 * p6 * p8 == 0)
            else:
                cond = (p2 * p4 * p8 == 0) & (p2 * p6 * p8 == 0)
            remove = img & (b >= 2) & (b <= 6) & (a == 1) & cond
            if remove.any():
                img &= ~remove
                changed = True
        if not changed:
            return img


_RING = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)]
# ring positions i, j whose cells are themselves 8-adjacent
_RING_ADJ = [(i, j) for i in range(8) for j in range(i + 1, 8)
             if max(abs(_RING[i][0] - _RING[j][0]),
                    abs(_RING[i][1] - _RING[j][1])) <= 1]


def _prune_simple_points(on: np.ndarray) -> np.ndarray:
    """Sequentially erode simple points the parallel thinning pass misses.

    The parallel pass leaves two-pixel-wide diagonal runs and staircase
    corners; every pixel there has three or more neighbors and the whole
    chain would be destroyed by junction removal. A pixel is simple when
    its on-neighbors form a single 8-connected component, so removing it
    cannot disconnect the curve; removal is sequential so a chain cannot
    vanish at once. Endpoints (a single neighbor) are kept.
    """
    padded = np.pad(on, 1)
    while True:
        removed = 0
        for y, x in np.argwhere(padded):
            ring = [bool(padded[y + dy, x + dx]) for dy, dx in _RING]
            b = sum(ring)
            if not 2 <= b <= 6:
                continue
            comp = list(range(8))

            def find(i):
                while comp[i] != i:
                    comp[i] = comp[comp[i]]
                    i = comp[i]
                return i

            for i, j in _RING_ADJ:
                if ring[i] and ring[j]:
                    comp[find(i)] = find(j)
            roots = {find(i) for i in range(8) if ring[i]}
            if len(roots) == 1:
                padded[y, x] = False
                removed += 1
        if removed == 0:
            return padded[1:-1, 1:-1]


def cleanup(edges: EdgeMap) -> EdgeMap:
    """Thin to unit width, prune staircase corners, drop junction pixels,
    drop isolated pixels."""
    on = _thin_zhang_suen(edges.on)
    on = _prune_simple_points(on)
    on = on & (_neighbor_count(on) < 3)
    on = on & (_neighbor_count(on) > 0)
    return EdgeMap(on)


_STEPS = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


def trace_contours(edges: EdgeMap) -> list[np.ndarray]:
    """Partition a cleaned edge map into open contours.

    Returns arrays of (x, y) int coordinates. Open chains are traced
    endpoint to endpoint; loops are cut at the lexicographically smallest
    (y, x) unvisited pixel.
    """
    on = edges.on
    h, w = on.shape
    counts = _neighbor_count(on)
    visited = np.zeros_like(on)

    def walk(y0, x0):
        pts = [(x0, y0)]
        visited[y0, x0] = True
        y, x = y0, x0
        while True:
            nxt = None
            for dy, dx in _STEPS:
                ny, nx = y + dy, x + dx
                if 0 <= ny < h and 0 <= nx < w and on[ny, nx] and not visited[ny, nx]:
                    nxt = (ny, nx)
                    break
            if nxt is None:
                break
            y, x = nxt
            visited[y, x] = True
            pts.append((x, y))
        return np.array(pts, dtype=int)

    contours = []
    # open chains first: start from endpoints (pixels with <= 1 neighbor)
    endpoints = np.argwhere(on & (counts <= 1))
    for y, x in endpoints:
        if not visited[y, x]:
            contours.append(walk(y, x))
    # leftover pixels belong to loops
    remaining = np.argwhere(on & ~visited)
    for y, x in remaining:
        if not visited[y, x]:
            contours.append(walk(y, x))
    return contours
