"""Debug overlay images for the intermediate detector stages."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .edges import EdgeMap
from .ellipses import Ellipse, ellipse_point
from .raster import Raster

RED = (1.0, 0.2, 0.2)
GREEN = (0.2, 1.0, 0.3)
BLUE = (0.3, 0.5, 1.0)
WHITE = (1.0, 1.0, 1.0)


def _as_color(img: Raster) -> np.ndarray:
    d = img.data
    return np.repeat(d[:, :, None], 3, axis=2).copy() if d.ndim == 2 else d.copy()


def _plot(canvas: np.ndarray, xs, ys, color) -> None:
    h, w = canvas.shape[:2]
    xs = np.round(xs).astype(int)
    ys = np.round(ys).astype(int)
    ok = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
    canvas[ys[ok], xs[ok]] = color


def edge_overlay(img: Raster, edges: EdgeMap, path: str | Path) -> None:
    canvas = _as_color(img)
    canvas[edges.on] = GREEN
    Raster(np.clip(canvas, 0, 1)).save(path)


def curves_overlay(img: Raster, curves, path: str | Path) -> None:
    canvas = _as_color(img)
    for i, curve in enumerate(curves):
        color = (GREEN, BLUE, RED)[i % 3]
        pts = np.asarray(curve)
        _plot(canvas, pts[:, 0], pts[:, 1], color)
    Raster(np.clip(canvas, 0, 1)).save(path)


def ellipses_overlay(img: Raster, groups: list[tuple[list[Ellipse], tuple]],
                     path: str | Path) -> None:
    """Draw ellipse groups, each with its own color (detections red,
    predictions white, reconstructions blue by convention)."""
    canvas = _as_color(img)
    theta = np.linspace(0, 2 * np.pi, 720, endpoint=False)
    for ellipses, color in groups:
        for e in ellipses:
            pts = ellipse_point(e, theta)
            _plot(canvas, pts[:, 0], pts[:, 1], color)
    Raster(np.clip(canvas, 0, 1)).save(path)


def emit_detection_overlays(det, out_dir: str | Path) -> None:
    """Write the standard overlay set for a DetectionResult."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    curves_overlay(det.image, det.curves, out / "curves.png")
    ellipses_overlay(det.image,
                     [([fr.ellipse for fr in det.raw_fits], BLUE)],
                     out / "raw_fits.png")
    ellipses_overlay(det.image, [(list(det.stack.rows), RED)],
                     out / "stack.png")
