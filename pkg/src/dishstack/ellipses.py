"""Ellipse geometry, direct least-squares fitting and stack filtering.

An ellipse is (p, q, A, B, alpha): center, major/minor radii and the
orientation of the major axis. Image y grows downward, so the stack's
bottom dish has the largest bottom_y.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class FitError(ValueError):
    pass


class TooFewPointsError(FitError):
    pass


class DegenerateConicError(FitError):
    """The best-fitting conic is not an ellipse."""


_CIRCLE_EPS = 1e-6


@dataclass(frozen=True)
class Ellipse:
    p: float
    q: float
    A: float
    B: float
    alpha: float

    def __post_init__(self):
        if not (self.A >= self.B > 0):
            raise ValueError("need A >= B > 0")
        if not (-math.pi / 2 <= self.alpha < math.pi / 2):
            raise ValueError("alpha must lie in [-pi/2, pi/2)")

    @staticmethod
    def make(p, q, A, B, alpha) -> "Ellipse":
        """Normalize: swap axes so A >= B, fold alpha into [-pi/2, pi/2)."""
        if B > A:
            A, B = B, A
            alpha = alpha + math.pi / 2
        alpha = (alpha + math.pi / 2) % math.pi - math.pi / 2
        if alpha >= math.pi / 2:  # modulo can round up to pi exactly
            alpha -= math.pi
        if abs(A - B) / A < _CIRCLE_EPS:
            alpha = 0.0  # orientation unidentifiable for circles
        return Ellipse(float(p), float(q), float(A), float(B), float(alpha))

    def params(self) -> np.ndarray:
        return np.array([self.p, self.q, self.A, self.B, self.alpha])


@dataclass(frozen=True)
class FitResult:
    ellipse: Ellipse
    source: np.ndarray  # the point set the fit came from
    residual: float


def ellipse_point(e: Ellipse, theta) -> np.ndarray:
    """Point(s) on the ellipse at parameter angle theta."""
    theta = np.asarray(theta, dtype=float)
    ca, sa = math.cos(e.alpha), math.sin(e.alpha)
    u = e.A * np.cos(theta)
    v = e.B * np.sin(theta)
    return np.stack([e.p + ca * u - sa * v, e.q + sa * u + ca * v], axis=-1)


def bottom_y(e: Ellipse) -> float:
    """Largest image-y coordinate on the ellipse (y grows downward)."""
    sa, ca = math.sin(e.alpha), math.cos(e.alpha)
    return e.q + math.sqrt(e.A ** 2 * sa ** 2 + e.B ** 2 * ca ** 2)


def frame_errors(e: Ellipse, points: np.ndarray) -> np.ndarray:
    """| ||point in unit-ellipse frame|| - 1 | for each point."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    ca, sa = math.cos(e.alpha), math.sin(e.alpha)
    dx = pts[:, 0] - e.p
    dy = pts[:, 1] - e.q
    u = (ca * dx + sa * dy) / e.A
    v = (-sa * dx + ca * dy) / e.B
    return np.abs(np.hypot(u, v) - 1.0)


def _conic_to_ellipse(coef: np.ndarray) -> Ellipse:
    a, b, c, d, e_, f = coef
    M = np.array([[a, b / 2], [b / 2, c]])
    disc = b * b - 4 * a * c
    if disc >= 0:
        raise DegenerateConicError("conic is not an ellipse")
    center = np.linalg.solve(M, [-d / 2, -e_ / 2])
    f0 = center @ M @ center + d * center[0] + e_ * center[1] + f
    w, v = np.linalg.eigh(M)
    axes2 = -f0 / w
    if np.any(axes2 <= 0):
        raise DegenerateConicError("conic has no real ellipse axes")
    axes = np.sqrt(axes2)
    major = int(np.argmax(axes))
    alpha = math.atan2(v[1, major], v[0, major])
    return Ellipse.make(center[0], center[1], axes[major], axes[1 - major], alpha)


def fit_ellipse(points) -> FitResult:
    """Direct ellipse-constrained least-squares conic fit (stable variant).

    Coordinates are centered and scaled before solving for conditioning;
    noiseless samples are recovered to better than 1e-6 relative.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise FitError("points must be an (n, 2) array")
    if len(pts) < 6:
        raise TooFewPointsError("ellipse fitting needs at least 6 points")

    mean = pts.mean(axis=0)
    scale = np.hypot(*(pts - mean).T).mean()
    if scale == 0:
        raise DegenerateConicError("all points coincide")
    x, y = ((pts - mean) / scale).T

    d1 = np.column_stack([x * x, x * y, y * y])
    d2 = np.column_stack([x, y, np.ones_like(x)])
    s1 = d1.T @ d1
    s2 = d1.T @ d2
    s3 = d2.T @ d2
    try:
        t = -np.linalg.solve(s3, s2.T)
    except np.linalg.LinAlgError:
        raise DegenerateConicError("degenerate point configuration") from None
    m = s1 + s2 @ t
    # apply the inverse ellipse-constraint matrix
    m = np.array([m[2] / 2, -m[1], m[0] / 2])
    try:
        eigval, eigvec = np.linalg.eig(m)
    except np.linalg.LinAlgError:
        raise DegenerateConicError("eigen decomposition failed") from None
    cond = np.real(4 * eigvec[0] * eigvec[2] - eigvec[1] ** 2)
    valid = np.where(np.isreal(eigval) & (cond > 0))[0]
    if len(valid) == 0:
        raise DegenerateConicError("best-fit conic is not an ellipse")
    a1 = np.real(eigvec[:, valid[0]])
    coef_n = np.concatenate([a1, t @ a1])

    # undo the centering/scaling: x = (X - mx) / s
    a, b, c, d, e_, f = coef_n
    mx, my = mean
    s = scale
    coef = np.array([
        a / s ** 2,
        b / s ** 2,
        c / s ** 2,
        (-2 * a * mx - b * my) / s ** 2 + d / s,
        (-b * mx - 2 * c * my) / s ** 2 + e_ / s,
        (a * mx * mx + b * mx * my + c * my * my) / s ** 2
        - (d * mx + e_ * my) / s + f,
    ])
    ellipse = _conic_to_ellipse(coef)
    residual = float(np.sqrt(np.mean(frame_errors(ellipse, pts) ** 2)))
    return FitResult(ellipse=ellipse, source=pts, residual=residual)


def _angle_dist(a: float, b: float) -> float:
    d = abs(a - b) % math.pi
    return min(d, math.pi - d)


def consensus_filter(fits: list[FitResult], seed: int = 0,
                     center_tol: float = 0.15, radius_tol: float = 0.15,
                     angle_tol_deg: float = 10.0, max_iters: int = 50,
                     circular_ratio: float = 0.9) -> list[FitResult]:
    """Keep the largest subset consistent in center-x, major radius and tilt.

    RANSAC-style: each sampled fit proposes (p0, A0, alpha0); inliers agree
    within scale-relative tolerances. The orientation test is skipped when
    either ellipse is nearly circular (tilt unidentifiable).
    """
    n = len(fits)
    if n <= 1:
        return list(fits)
    rng = np.random.default_rng(seed)
    if n > max_iters:
        order = rng.permutation(n)[:max_iters]
    else:
        order = np.arange(n)
    angle_tol = math.radians(angle_tol_deg)

    best: list[int] = []
    for idx in order:
        ref = fits[idx].ellipse
        inliers = []
        for j, fr in enumerate(fits):
            e = fr.ellipse
            if abs(e.p - ref.p) > center_tol * ref.A:
                continue
            if abs(e.A - ref.A) > radius_tol * ref.A:
                continue
            circularish = (ref.B / ref.A > circular_ratio
                           or e.B / e.A > circular_ratio)
            if not circularish and _angle_dist(e.alpha, ref.alpha) > angle_tol:
                continue
            inliers.append(j)
        if len(inliers) > len(best):
            best = inliers
    return [fits[j] for j in best]


def dedup_double_borders(fits: list[FitResult], min_gap: float) -> list[FitResult]:
    """Collapse rim double-detections: of two ellipses whose bottom-most
    points are closer than min_gap, keep the lower one."""
    if not fits:
        return []
    ordered = sorted(fits, key=lambda fr: -bottom_y(fr.ellipse))
    kept = [ordered[0]]
    for fr in ordered[1:]:
        if bottom_y(kept[-1].ellipse) - bottom_y(fr.ellipse) < min_gap:
            continue  # fr sits above within the rim gap: drop it
        kept.append(fr)
    return kept
