"""Polyline simplification and smooth-curvature division.

Contours arrive as dense pixel chains; they leave as short vertex lists
whose pieces have slowly varying, single-signed turning.
"""

from __future__ import annotations

import numpy as np


def point_line_deviation(pt, a, b) -> float:
    """Perpendicular distance from pt to the line through a and b."""
    x1, y1 = a
    xn, yn = b
    length = float(np.hypot(xn - x1, yn - y1))
    if length == 0.0:
        raise ValueError("line endpoints coincide")
    xi, yi = pt
    num = abs(xi * (y1 - yn) + yi * (xn - x1) + yn * x1 - y1 * xn)
    return num / length


def _deviations(points: np.ndarray, i: int, j: int) -> np.ndarray:
    """Distances of points[i+1:j] from the segment points[i]-points[j].

    Distance to the segment (projection clamped to it), not the infinite
    line: a contour that doubles back past an endpoint must still count
    as deviating, or simplification loses the distance-to-polyline bound.
    """
    a = points[i].astype(float)
    b = points[j].astype(float)
    seg = points[i + 1:j].astype(float)
    d = b - a
    length2 = float(d @ d)
    if length2 == 0.0:
        return np.hypot(seg[:, 0] - a[0], seg[:, 1] - a[1])
    t = np.clip((seg - a) @ d / length2, 0.0, 1.0)
    closest = a + t[:, None] * d
    return np.hypot(seg[:, 0] - closest[:, 0], seg[:, 1] - closest[:, 1])


def rdp_simplify(contour: np.ndarray, tol: float = 2.0) -> np.ndarray:
    """Ramer-Douglas-Peucker: keep splitting at the max-deviation point."""
    points = np.asarray(contour, dtype=float)
    if len(points) < 2:
        raise ValueError("need at least 2 points")
    n = len(points)
    keep = np.zeros(n, dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, n - 1)]
    while stack:
        i, j = stack.pop()
        if j - i < 2:
            continue
        dev = _deviations(points, i, j)
        k = int(np.argmax(dev))
        if dev[k] > tol:
            mid = i + 1 + k
            keep[mid] = True
            stack.append((i, mid))
            stack.append((mid, j))
    return points[keep]


def turn_angles(vertices: np.ndarray) -> np.ndarray:
    """Signed exterior angle (radians) at each interior vertex."""
    v = np.asarray(vertices, dtype=float)
    d = np.diff(v, axis=0)
    a, b = d[:-1], d[1:]
    cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    dot = (a * b).sum(axis=1)
    return np.arctan2(cross, dot)


def split_smooth(poly: np.ndarray, sharp_turn_deg: float = 90.0) -> list[np.ndarray]:
    """Cut a polyline at sharp turns and inflexion points.

    A vertex is a cut point when its |turn| strictly exceeds the threshold,
    or when its nonzero turn sign differs from the previous nonzero turn in
    the current piece. Pieces share their boundary vertex.
    """
    poly = np.asarray(poly, dtype=float)
    if len(poly) < 3:
        return [poly]
    limit = np.radians(sharp_turn_deg)
    angles = turn_angles(poly)
    cuts = []
    prev_sign = 0
    for i, ang in enumerate(angles, start=1):
        s = 0 if ang == 0.0 else (1 if ang > 0 else -1)
        if abs(ang) > limit or (s != 0 and prev_sign != 0 and s != prev_sign):
            cuts.append(i)
        if s != 0:
            prev_sign = s
    pieces = []
    start = 0
    for c in cuts:
        pieces.append(poly[start:c + 1])
        start = c
    pieces.append(poly[start:])
    return pieces
