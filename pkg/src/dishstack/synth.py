"""Synthetic dish-stack scenes with exact ground truth.

Every quantitative check in the test suite runs against images produced
here: a vertical tower of colored elliptical dishes with bright rims,
off-tower clutter, illumination/shadow variation and pixel noise. All
randomness derives from the spec seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import DEFAULT_PALETTE
from .dishfeat import ClassLabel, DishPatch, extract_patch
from .ellipses import Ellipse, bottom_y
from .raster import Raster
from .stack_recon import ParamMatrix

RIM_WIDTH = 3.0        # solid bright rim, in pixels inside the true curve
RIM_BLEND = 3.0        # rim-to-fill blend band, keeps the inner edge soft
OUTLINE_WIDTH = 5.0    # contact shadow just outside the curve
OUTLINE_DARKEN = 0.35  # multiplier at the curve, fading back to 1
RIM_COLOR = np.array([0.97, 0.97, 0.95])


@dataclass(frozen=True)
class SceneSpec:
    width: int = 800
    height: int = 600
    labels: tuple = (0, 1, 2, 3, 4)      # class index per dish, bottom first
    center_x: float = 400.0
    bottom_center_y: float = 480.0       # center q of the bottom dish
    major: float = 110.0
    minor: float = 40.0
    alpha: float = 0.0
    spacing: float = 32.0                # center-to-center vertical step
    drift_major: float = 0.0             # per-dish change in A (perspective)
    drift_spacing: float = 0.0           # per-dish change in spacing
    illumination: float = 1.0
    shadow: float = 0.15                 # top-to-bottom brightness falloff
    clutter: int = 3
    noise_sigma: float = 0.005
    seed: int = 0
    palette: tuple = tuple(DEFAULT_PALETTE)

    def __post_init__(self):
        if len(self.labels) < 1:
            raise ValueError("need at least one dish")
        if self.spacing <= 0:
            raise ValueError("spacing must be positive")
        if not 0 < self.illumination <= 1:
            raise ValueError("illumination must be in (0, 1]")


@dataclass(frozen=True)
class GroundTruth:
    image: Raster
    ellipses: tuple        # sorted by descending bottom_y (bottom dish first)
    labels: tuple          # class index per ellipse, aligned with `ellipses`

    def stack(self) -> ParamMatrix:
        return ParamMatrix(self.ellipses)


def _dish_ellipses(spec: SceneSpec) -> list[Ellipse]:
    dishes = []
    q = spec.bottom_center_y
    for i in range(len(spec.labels)):
        a = spec.major + i * spec.drift_major
        dishes.append(Ellipse.make(spec.center_x, q, a, spec.minor, spec.alpha))
        q -= spec.spacing + i * spec.drift_spacing
    return dishes


def _signed_distance(e: Ellipse, xs, ys):
    """Approximate signed pixel distance to the ellipse curve (negative inside)."""
    ca, sa = math.cos(e.alpha), math.sin(e.alpha)
    dx = xs - e.p
    dy = ys - e.q
    u = (ca * dx + sa * dy) / e.A
    v = (-sa * dx + ca * dy) / e.B
    n = np.hypot(u, v)
    gx = (u * ca / e.A - v * sa / e.B)
    gy = (u * sa / e.A + v * ca / e.B)
    grad = np.hypot(gx, gy) / np.maximum(n, 1e-12)
    return (n - 1.0) / np.maximum(grad, 1e-12)


def _dish_box(e: Ellipse, w: int, h: int, pad: float = 4.0):
    ext_x = math.hypot(e.A * math.cos(e.alpha), e.B * math.sin(e.alpha))
    ext_y = math.hypot(e.A * math.sin(e.alpha), e.B * math.cos(e.alpha))
    x0 = max(0, int(e.p - ext_x - pad))
    x1 = min(w, int(e.p + ext_x + pad) + 1)
    y0 = max(0, int(e.q - ext_y - pad))
    y1 = min(h, int(e.q + ext_y + pad) + 1)
    return x0, x1, y0, y1


def _paint_dish(canvas: np.ndarray, e: Ellipse, fill: np.ndarray,
                shade: float, arc: tuple[float, float] | None,
                rng: np.random.Generator) -> None:
    """Draw one dish: colored fill plus a bright rim hugging the curve.

    `arc = (center_angle, half_width)` restricts the dish to a rim arc only
    (used for weak dishes); None draws fill and full rim.
    """
    h, w = canvas.shape[:2]
    x0, x1, y0, y1 = _dish_box(e, w, h)
    if x0 >= x1 or y0 >= y1:
        return
    ys, xs = np.mgrid[y0:y1, x0:x1]
    dist = _signed_distance(e, xs.astype(float), ys.astype(float))
    # only the rim's outer boundary is a hard edge; the rim fades into the
    # fill so the dish contributes a single strong contour per border
    rim = (dist <= 0) & (dist >= -RIM_WIDTH)
    blend = (dist < -RIM_WIDTH) & (dist >= -RIM_WIDTH - RIM_BLEND)
    # contact shadow just outside the curve: keeps the border visible even
    # where this dish's rim crosses the bright rim of the dish below
    outline = (dist > 0) & (dist <= OUTLINE_WIDTH)
    if arc is None:
        inside = dist < -RIM_WIDTH - RIM_BLEND
        # mild radial shading so dishes are not flat color
        ca, sa = math.cos(e.alpha), math.sin(e.alpha)
        u = (ca * (xs - e.p) + sa * (ys - e.q)) / e.A
        v = (-sa * (xs - e.p) + ca * (ys - e.q)) / e.B
        radial = np.clip(np.hypot(u, v), 0, 1)
        shading = shade * (1.0 - 0.25 * radial)
        region = canvas[y0:y1, x0:x1]
        region[inside] = fill[None, :] * shading[inside, None]
        wgt = ((dist[blend] + RIM_WIDTH + RIM_BLEND) / RIM_BLEND)[:, None]
        region[blend] = ((fill[None, :] * shading[blend, None]) * (1 - wgt)
                         + RIM_COLOR * shade * wgt)
        region[rim] = RIM_COLOR * shade
        fade = OUTLINE_DARKEN + (1 - OUTLINE_DARKEN) * dist[outline] / OUTLINE_WIDTH
        region[outline] *= fade[:, None]
    else:
        center, half = arc
        ca, sa = math.cos(e.alpha), math.sin(e.alpha)
        u = (ca * (xs - e.p) + sa * (ys - e.q)) / e.A
        v = (-sa * (xs - e.p) + ca * (ys - e.q)) / e.B
        t = np.arctan2(v, u)
        dt = np.abs((t - center + math.pi) % (2 * math.pi) - math.pi)
        region = canvas[y0:y1, x0:x1]
        region[rim & (dt <= half)] = RIM_COLOR * shade
        sel = outline & (dt <= half)
        fade = OUTLINE_DARKEN + (1 - OUTLINE_DARKEN) * dist[sel] / OUTLINE_WIDTH
        region[sel] *= fade[:, None]


def _bottom_angle(e: Ellipse) -> float:
    """Frame angle of the bottom-most point (largest image y)."""
    ca, sa = math.cos(e.alpha), math.sin(e.alpha)
    # y(t) = q + sa*A*cos t + ca*B*sin t, in frame angle t of (u, v)
    return math.atan2(ca * e.B, sa * e.A)


def _paint_clutter(canvas: np.ndarray, spec: SceneSpec,
                   rng: np.random.Generator) -> None:
    h, w = canvas.shape[:2]
    keepout = 1.9 * spec.major
    for _ in range(spec.clutter):
        for _attempt in range(20):
            cx = rng.uniform(40, w - 40)
            cy = rng.uniform(40, h - 40)
            if abs(cx - spec.center_x) > keepout:
                break
        else:
            continue
        kind = rng.integers(3)
        color = rng.uniform(0.2, 0.9, size=3)
        if kind == 0 or kind == 1:
            a = rng.uniform(20, 70)
            b = rng.uniform(10, a)
            e = Ellipse.make(cx, cy, a, b, rng.uniform(-1.2, 1.2))
            x0, x1, y0, y1 = _dish_box(e, w, h)
            if x0 >= x1 or y0 >= y1:
                continue
            ys, xs = np.mgrid[y0:y1, x0:x1]
            dist = _signed_distance(e, xs.astype(float), ys.astype(float))
            if kind == 0:
                canvas[y0:y1, x0:x1][dist < 0] = color
            else:
                canvas[y0:y1, x0:x1][np.abs(dist) <= 1.0] = color
        else:
            # a short bright line segment
            ang = rng.uniform(0, math.pi)
            length = rng.uniform(40, 140)
            ex = cx + length * math.cos(ang)
            ey = cy + length * math.sin(ang)
            n = int(length * 2)
            t = np.linspace(0, 1, n)
            px = np.clip((cx + t * (ex - cx)).round().astype(int), 0, w - 1)
            py = np.clip((cy + t * (ey - cy)).round().astype(int), 0, h - 1)
            canvas[py, px] = color


def _render(spec: SceneSpec, weak: dict[int, float]) -> GroundTruth:
    """Rasterize the stack; `weak` maps dish index -> retained arc fraction."""
    rng = np.random.default_rng(spec.seed)
    h, w = spec.height, spec.width
    # background with broad low-frequency texture: spreads the gray
    # histogram so equalization does not amplify pixel noise into edges
    gy = np.linspace(0.0, 1.0, h)[:, None]
    gx = np.linspace(0.0, 1.0, w)[None, :]
    phase = rng.uniform(0, 2 * math.pi, size=3)
    texture = (0.5 * np.sin(2 * math.pi * (1.3 * gx + 0.4 * gy) + phase[0])
               + 0.3 * np.sin(2 * math.pi * (0.5 * gx + 1.7 * gy) + phase[1])
               + 0.2 * np.sin(2 * math.pi * (2.2 * gx - 1.1 * gy) + phase[2]))
    base = 0.28 + 0.10 * texture + 0.05 * gy
    canvas = np.repeat(base[:, :, None], 3, axis=2) * np.array([1.0, 0.96, 0.9])

    _paint_clutter(canvas, spec, rng)

    dishes = _dish_ellipses(spec)
    colors = [np.array(spec.palette[lab][1]) for lab in spec.labels]
    for i, (e, color) in enumerate(zip(dishes, colors)):
        shade = rng.uniform(0.9, 1.0)
        if i in weak:
            frac = weak[i]
            center = _bottom_angle(e) + rng.uniform(-0.3, 0.3)
            _paint_dish(canvas, e, color, shade, (center, frac * math.pi), rng)
        else:
            _paint_dish(canvas, e, color, shade, None, rng)

    canvas *= spec.illumination
    shadow = 1.0 - spec.shadow * (1.0 - np.linspace(0.0, 1.0, h))[:, None, None]
    canvas *= shadow
    if spec.noise_sigma > 0:
        canvas = canvas + rng.normal(0.0, spec.noise_sigma, canvas.shape)
    image = Raster(np.clip(canvas, 0.0, 1.0))

    order = sorted(range(len(dishes)), key=lambda i: -bottom_y(dishes[i]))
    return GroundTruth(image=image,
                       ellipses=tuple(dishes[i] for i in order),
                       labels=tuple(spec.labels[i] for i in order))


def render(spec: SceneSpec) -> GroundTruth:
    """Render a complete stack (every dish fully drawn)."""
    return _render(spec, weak={})


def render_occluded(spec: SceneSpec, drop_fraction: float) -> GroundTruth:
    """Render with one interior dish degraded to a short contiguous rim arc.

    The chosen dish keeps only the given fraction of its rim (no fill), so
    direct fitting fails but reconstruction can recover it. A fraction of 0
    disables the degradation entirely.
    """
    if not 0 <= drop_fraction < 1:
        raise ValueError("drop_fraction must be in [0, 1)")
    n = len(spec.labels)
    if drop_fraction == 0 or n < 3:
        return _render(spec, weak={})
    rng = np.random.default_rng(spec.seed + 7_919)
    victim = int(rng.integers(1, n - 1))  # interior dish, never top or bottom
    return _render(spec, weak={victim: drop_fraction})


def random_spec(seed: int, n_dishes: tuple[int, int] = (3, 10),
                clutter_max: int = 5, noise_sigma: float = 0.005,
                palette=tuple(DEFAULT_PALETTE)) -> SceneSpec:
    """A randomized but seed-deterministic scene specification."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(n_dishes[0], n_dishes[1] + 1))
    labels = tuple(int(v) for v in rng.integers(0, 8, size=n))
    major = float(rng.uniform(90, 125))
    minor = float(rng.uniform(0.32, 0.42) * major)
    spacing = float(rng.uniform(0.62, 0.82) * minor)
    height = 600
    return SceneSpec(
        width=800, height=height, labels=labels,
        center_x=float(rng.uniform(280, 520)),
        bottom_center_y=float(height - minor - rng.uniform(30, 60)),
        major=major, minor=minor,
        alpha=float(rng.uniform(-0.1, 0.1)),
        spacing=spacing,
        drift_major=float(rng.uniform(-0.5, 0.5)),
        drift_spacing=float(rng.uniform(-0.2, 0.2)),
        illumination=float(rng.uniform(0.7, 1.0)),
        shadow=float(rng.uniform(0.0, 0.25)),
        clutter=int(rng.integers(0, clutter_max + 1)),
        noise_sigma=noise_sigma,
        seed=seed,
        palette=palette,
    )


def ground_truth_sidecar(gt: GroundTruth, palette=tuple(DEFAULT_PALETTE)) -> dict:
    """JSON-serializable ground truth (ellipse parameters plus labels)."""
    return {
        "ellipses": [list(e.params()) for e in gt.ellipses],
        "labels": [{"index": lab, "name": palette[lab][0]} for lab in gt.labels],
    }


def load_sidecar(path: str | Path) -> tuple[list[Ellipse], list[int]]:
    raw = json.loads(Path(path).read_text())
    ellipses = [Ellipse.make(*row) for row in raw["ellipses"]]
    labels = [entry["index"] for entry in raw["labels"]]
    return ellipses, labels


def make_patch_dataset(count: int, seed: int,
                       palette=tuple(DEFAULT_PALETTE)
                       ) -> list[tuple[DishPatch, ClassLabel]]:
    """Labeled patches extracted from rendered scenes via the ground truth."""
    out = []
    scene_seed = seed
    while len(out) < count:
        spec = random_spec(scene_seed, n_dishes=(4, 8), palette=palette)
        gt = render(spec)
        stack = gt.stack()
        top_down_labels = list(reversed(gt.labels))
        for i, lab in enumerate(top_down_labels):
            if len(out) >= count:
                break
            label = ClassLabel(lab, palette[lab][0])
            out.append((extract_patch(gt.image, stack, i, label), label))
        scene_seed += 1
    return out
