"""End-to-end orchestration: image -> dish stack -> classes -> bill,
plus the detection / classification evaluation metrics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import stack_recon
from .cnn.model import CnnModel, forward as cnn_forward
from .config import AppConfig, PipelineConfig
from .dishfeat import ClassLabel, extract_patch
from .edges import canny, cleanup, trace_contours
from .ellipses import (Ellipse, FitError, FitResult, bottom_y,
                       consensus_filter, dedup_double_borders, fit_ellipse)
from .polyline import rdp_simplify, split_smooth
from .raster import Raster, equalize_histogram, resize_max_side, to_grayscale
from .stack_recon import ParamMatrix


class NoDishTowerError(RuntimeError):
    """The consensus stage found no consistent stack of ellipses."""


def _refit_cluster(kept_fit: FitResult, all_fits: list[FitResult],
                   min_gap: float) -> FitResult:
    """Pick the best-supported fit among near-duplicates of one dish.

    Deduplication keeps one ellipse per bottom band, but a short partial
    arc can edge out a much longer (better conditioned) arc of the same
    border; prefer the member with the most supporting points.
    """
    base = bottom_y(kept_fit.ellipse)
    members = [fr for fr in all_fits
               if abs(bottom_y(fr.ellipse) - base) < min_gap]
    if not members:
        return kept_fit
    return max(members, key=lambda fr: len(fr.source))


@dataclass
class DetectionResult:
    stack: ParamMatrix
    curves: list            # smooth curves (detector working set)
    raw_fits: list          # all FitResults before filtering
    consensus: list         # FitResults surviving consensus + dedup
    image: Raster           # the (possibly resized) color image


def detect_ellipses(img: Raster, cfg: PipelineConfig | None = None,
                    seed: int = 0, reconstruct: bool | None = None
                    ) -> DetectionResult:
    """Run the full detector; raises NoDishTowerError when nothing is found."""
    cfg = cfg or PipelineConfig()
    if reconstruct is None:
        reconstruct = cfg.reconstruct

    color = resize_max_side(img, cfg.resize_limit)
    gray = to_grayscale(color) if color.channels == 3 else color
    gray = equalize_histogram(gray)
    edge_map = cleanup(canny(gray, cfg.canny_low, cfg.canny_high,
                             cfg.canny_sigma))
    contours = trace_contours(edge_map)

    curves = []
    for contour in contours:
        if len(contour) < 2:
            continue
        poly = rdp_simplify(contour, cfg.rdp_tolerance)
        curves.extend(split_smooth(poly, cfg.sharp_turn_deg))

    fits: list[FitResult] = []
    for curve in curves:
        if len(curve) < 3:
            continue
        # fit the densified curve: a shallow arc keeps few simplified
        # vertices, but every pixel along it constrains the ellipse
        points = stack_recon.densify_polyline(curve, 2.0)
        if len(points) < cfg.min_fit_points:
            continue
        try:
            fits.append(fit_ellipse(points))
        except FitError:
            continue

    kept = consensus_filter(
        fits, seed=seed,
        center_tol=cfg.consensus_center_tol,
        radius_tol=cfg.consensus_radius_tol,
        angle_tol_deg=cfg.consensus_angle_tol_deg,
        max_iters=cfg.consensus_max_iters,
        circular_ratio=cfg.consensus_circular_ratio)
    if not kept:
        raise NoDishTowerError("no dish tower detected")

    min_gap = cfg.dedup_gap_factor * float(
        np.median([fr.ellipse.B for fr in kept]))
    deduped = dedup_double_borders(kept, min_gap)
    deduped = [_refit_cluster(fr, kept, min_gap) for fr in deduped]
    # cluster selection can move near-duplicates back within the gap;
    # its fits also carry better minor-radius estimates, so recompute
    min_gap = max(min_gap, cfg.dedup_gap_factor * float(
        np.median([fr.ellipse.B for fr in deduped])))
    deduped = dedup_double_borders(deduped, min_gap)
    stack = ParamMatrix.from_ellipses([fr.ellipse for fr in deduped])
    if reconstruct:
        rebuilt = stack_recon.reconstruct(
            stack, curves,
            gather_tol=cfg.gather_error,
            search_range=cfg.refine_range,
            coverage_bins=cfg.coverage_bins,
            coverage_min=cfg.accept_coverage,
            rms_max=cfg.accept_rms,
            point_max=cfg.accept_max)
        # keep inserts only where a genuine hole exists
        detected_by = [bottom_y(e) for e in stack.rows]
        rows = [e for e in rebuilt.rows
                if e in stack.rows
                or all(abs(bottom_y(e) - by) >= min_gap for by in detected_by)]
        stack = ParamMatrix.from_ellipses(rows)
    return DetectionResult(stack=stack, curves=curves, raw_fits=fits,
                           consensus=deduped, image=color)


# ---------------------------------------------------------------- billing

@dataclass(frozen=True)
class BillLine:
    dish_index: int          # counted from the top of the stack
    class_name: str
    confidence: float
    price: int               # minor currency units


@dataclass(frozen=True)
class Bill:
    lines: tuple
    currency: str

    @property
    def total(self) -> int:
        return sum(line.price for line in self.lines)


def run_pipeline(img: Raster, model: CnnModel, config: AppConfig,
                 seed: int = 0, reconstruct: bool | None = None
                 ) -> tuple[Bill, DetectionResult]:
    """Detect the stack, classify each dish and price the result."""
    det = detect_ellipses(img, config.pipeline, seed=seed,
                          reconstruct=reconstruct)
    names = [name for name, _ in config.palette]
    lines = []
    for i in range(len(det.stack.rows)):
        patch = extract_patch(det.image, det.stack, i)
        probs = cnn_forward(model, patch.pixels)
        cls = int(np.argmax(probs))
        name = names[cls]
        lines.append(BillLine(dish_index=i, class_name=name,
                              confidence=float(probs[cls]),
                              price=config.prices[name]))
    return Bill(lines=tuple(lines), currency=config.currency), det


# ---------------------------------------------------------------- metrics

@dataclass(frozen=True)
class DetectionReport:
    tp: int
    fp: int
    gt: int

    @property
    def precision(self) -> float:
        return 1.0 if self.tp + self.fp == 0 else self.tp / (self.tp + self.fp)

    @property
    def recall(self) -> float:
        return 0.0 if self.gt == 0 else self.tp / self.gt

    def __add__(self, other: "DetectionReport") -> "DetectionReport":
        return DetectionReport(self.tp + other.tp, self.fp + other.fp,
                               self.gt + other.gt)


def match_detections(detected: list[Ellipse], truth: list[Ellipse],
                     center_tol: float = 0.25, radius_tol: float = 0.25
                     ) -> DetectionReport:
    """Greedy one-to-one matching by center distance.

    A detection matches a truth ellipse iff the center distance and the
    major-radius difference are both below tol * A_truth.
    """
    pairs = []
    for di, d in enumerate(detected):
        for ti, t in enumerate(truth):
            dist = math.hypot(d.p - t.p, d.q - t.q)
            if dist < center_tol * t.A and abs(d.A - t.A) < radius_tol * t.A:
                pairs.append((dist, di, ti))
    pairs.sort()
    used_d, used_t = set(), set()
    tp = 0
    for _, di, ti in pairs:
        if di in used_d or ti in used_t:
            continue
        used_d.add(di)
        used_t.add(ti)
        tp += 1
    return DetectionReport(tp=tp, fp=len(detected) - tp, gt=len(truth))


@dataclass
class ConfusionMatrix:
    counts: np.ndarray = field(
        default_factory=lambda: np.zeros((8, 8), dtype=int))

    def add(self, true_class: int, predicted: int) -> None:
        self.counts[true_class, predicted] += 1

    @property
    def accuracy(self) -> float:
        total = self.counts.sum()
        return 0.0 if total == 0 else float(np.trace(self.counts)) / total

    def write_csv(self, path: str | Path, names: list[str]) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["true\\pred"] + names)
            for i, name in enumerate(names):
                writer.writerow([name] + [int(v) for v in self.counts[i]])

    def write_heatmap(self, path: str | Path, cell: int = 40) -> None:
        """Simple red-intensity heatmap image of the matrix."""
        from PIL import Image
        norm = self.counts / max(1, self.counts.max())
        rgb = np.zeros((8, 8, 3))
        rgb[:, :, 0] = norm
        rgb[:, :, 2] = 1.0 - norm
        img = np.repeat(np.repeat((rgb * 255).astype(np.uint8), cell, axis=0),
                        cell, axis=1)
        Image.fromarray(img).save(path)


def evaluate_classifier(model: CnnModel, labeled_patches
                        ) -> tuple[float, ConfusionMatrix]:
    """Accuracy and 8x8 confusion matrix over labeled DishPatch pairs."""
    if not labeled_patches:
        raise ValueError("empty evaluation set")
    matrix = ConfusionMatrix()
    x = np.stack([p.pixels for p, _ in labeled_patches])
    y = [lab.index for _, lab in labeled_patches]
    for start in range(0, len(x), 128):
        probs = cnn_forward(model, x[start:start + 128])
        preds = np.argmax(probs, axis=1)
        for true_cls, pred in zip(y[start:start + 128], preds):
            matrix.add(true_cls, int(pred))
    return matrix.accuracy, matrix
