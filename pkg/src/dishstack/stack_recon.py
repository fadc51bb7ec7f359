"""Missing-dish prediction and evidence-gated reconstruction.

Detected dishes occupy integer positions along the stack (bottom = 0).
An inflated bottom-gap reveals skipped positions; each skipped position
gets a predicted ellipse, a local refinement against nearby curve
fragments, and a three-condition evidence gate before insertion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ellipses import Ellipse, bottom_y, frame_errors


class NoEvidenceError(ValueError):
    """Refinement requested without any gathered curve fragments."""


@dataclass(frozen=True)
class ParamMatrix:
    """Detected ellipses sorted by descending bottom-most y (bottom first)."""

    rows: tuple

    def __post_init__(self):
        if len(self.rows) < 1:
            raise ValueError("need at least one ellipse")
        ys = [bottom_y(e) for e in self.rows]
        if any(a < b for a, b in zip(ys, ys[1:])):
            raise ValueError("rows must be sorted by descending bottom_y")

    @staticmethod
    def from_ellipses(ellipses) -> "ParamMatrix":
        return ParamMatrix(tuple(sorted(ellipses, key=lambda e: -bottom_y(e))))

    def matrix(self) -> np.ndarray:
        return np.array([e.params() for e in self.rows])


@dataclass
class Prediction:
    ellipse: Ellipse
    insert_index: int            # stack position counted from the bottom
    gathered: list = field(default_factory=list)


@dataclass(frozen=True)
class Evidence:
    coverage: float
    rms_error: float
    max_error: float


def segment_error(e: Ellipse, pt) -> float:
    """Normalized-frame distance of pt from the ellipse curve (0 on it)."""
    return float(frame_errors(e, np.asarray(pt, dtype=float))[0])


def _positions(stack: ParamMatrix) -> list[int]:
    """Integer stack position of each row, inferred from bottom-y gaps."""
    ys = [bottom_y(e) for e in stack.rows]
    gaps = [a - b for a, b in zip(ys, ys[1:])]
    median = float(np.median(gaps))
    pos = [0]
    for g in gaps:
        step = max(1, round(g / median)) if median > 0 else 1
        pos.append(pos[-1] + step)
    return pos


def find_missing(stack: ParamMatrix) -> list[int]:
    """Stack positions with no detected dish, from the bottom-y gap pattern."""
    if len(stack.rows) < 2:
        return []
    pos = _positions(stack)
    present = set(pos)
    return [k for k in range(pos[-1]) if k not in present]


def densify_polyline(vertices: np.ndarray, step: float = 1.0) -> np.ndarray:
    """Sample points along polyline segments at most `step` apart."""
    v = np.asarray(vertices, dtype=float)
    if len(v) < 2:
        return v.reshape(-1, 2)
    out = []
    for a, b in zip(v[:-1], v[1:]):
        n = max(1, int(math.ceil(np.hypot(*(b - a)) / step)))
        t = np.arange(n) / n
        out.append(a + t[:, None] * (b - a))
    out.append(v[-1:])
    return np.vstack(out)


def predict(stack: ParamMatrix, insert_index: int, curves=(),
            gather_tol: float = 0.3) -> Prediction:
    """Extrapolate the five parameters to a missing stack position.

    Each parameter gets an independent least-squares line over the known
    positions. Curve fragments whose points all lie within gather_tol of
    the predicted ellipse (normalized frame) are attached as evidence.
    """
    pos = _positions(stack)
    if not (0 <= insert_index <= pos[-1]):
        raise ValueError("insert_index outside the stack")
    params = stack.matrix()
    x = np.array(pos, dtype=float)
    predicted = []
    for col in range(5):
        coeff = np.polyfit(x, params[:, col], 1) if len(x) > 1 else [0.0, params[0, col]]
        predicted.append(np.polyval(coeff, insert_index))
    p, q, a, b, alpha = predicted
    ellipse = Ellipse.make(p, q, max(a, b, 1e-9), max(min(a, b), 1e-9), alpha)

    gathered = []
    for curve in curves:
        pts = densify_polyline(curve)
        if len(pts) and np.all(frame_errors(ellipse, pts) < gather_tol):
            gathered.append(np.asarray(curve, dtype=float))
    return Prediction(ellipse=ellipse, insert_index=insert_index, gathered=gathered)


def _evidence(e: Ellipse, pts: np.ndarray, bins: int) -> Evidence:
    errs = frame_errors(e, pts)
    ca, sa = math.cos(e.alpha), math.sin(e.alpha)
    dx = pts[:, 0] - e.p
    dy = pts[:, 1] - e.q
    u = (ca * dx + sa * dy) / e.A
    v = (-sa * dx + ca * dy) / e.B
    theta = np.arctan2(v, u)
    idx = np.floor((theta + math.pi) / (2 * math.pi) * bins).astype(int)
    idx = np.clip(idx, 0, bins - 1)
    coverage = len(np.unique(idx)) / bins
    return Evidence(coverage=float(coverage),
                    rms_error=float(np.sqrt(np.mean(errs ** 2))),
                    max_error=float(errs.max()))


def refine(pred: Prediction, search_range: float = 0.1,
           coverage_bins: int = 64) -> tuple[Ellipse, Evidence]:
    """Coordinate descent on (p, q, A, B) minimizing RMS frame error.

    Alpha is held fixed; each parameter moves within +-search_range * A of
    the prediction on a shrinking step grid. Only strictly improving moves
    are taken, so the result never has larger RMS than the start point.
    """
    if not pred.gathered:
        raise NoEvidenceError("no curve fragments gathered around the prediction")
    pts = np.vstack([densify_polyline(c) for c in pred.gathered])

    e0 = pred.ellipse
    span = search_range * e0.A
    center = np.array([e0.p, e0.q, e0.A, e0.B])
    lo, hi = center - span, center + span

    def build(v) -> Ellipse:
        a = max(v[2], 1e-9)
        b = max(v[3], 1e-9)
        if b > a:
            a, b = b, a
        return Ellipse(v[0], v[1], a, b, e0.alpha)

    def cost(v) -> float:
        return float(np.sqrt(np.mean(frame_errors(build(v), pts) ** 2)))

    cur = center.copy()
    cur_cost = cost(cur)
    step = span / 4 if span > 0 else 0.0
    while step > 1e-3:
        improved = False
        for k in range(4):
            for delta in (step, -step):
                cand = cur.copy()
                cand[k] = min(max(cand[k] + delta, lo[k]), hi[k])
                if cand[k] == cur[k]:
                    continue
                c = cost(cand)
                if c < cur_cost:
                    cur, cur_cost = cand, c
                    improved = True
        if not improved:
            step /= 2
    best = build(cur)
    return best, _evidence(best, pts, coverage_bins)


def accept(ev: Evidence, coverage_min: float = 0.10, rms_max: float = 0.1,
           point_max: float = 0.2) -> bool:
    """Evidence gate: enough arc covered, small aggregate and pointwise error."""
    return (ev.coverage > coverage_min
            and ev.rms_error < rms_max
            and ev.max_error < point_max)


def reconstruct(stack: ParamMatrix, curves, gather_tol: float = 0.3,
                search_range: float = 0.1, coverage_bins: int = 64,
                coverage_min: float = 0.10, rms_max: float = 0.1,
                point_max: float = 0.2) -> ParamMatrix:
    """Insert evidence-backed predicted dishes at every missing position.

    Existing rows are never modified; the top-most dish is never a
    candidate (only interior gaps produce missing positions).
    """
    if len(stack.rows) < 2:
        return stack
    added = []
    for k in find_missing(stack):
        pred = predict(stack, k, curves, gather_tol)
        if not pred.gathered:
            continue
        ellipse, ev = refine(pred, search_range, coverage_bins)
        if accept(ev, coverage_min, rms_max, point_max):
            added.append(ellipse)
    if not added:
        return stack
    return ParamMatrix.from_ellipses(list(stack.rows) + added)
