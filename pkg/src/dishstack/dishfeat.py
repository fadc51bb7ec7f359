"""Per-dish classifier inputs: circle warp, upper-dish masking, half crop.

Patches are 50(h) x 100(w) x 3 blocks in [0, 1]. Dish indices here count
from the top of the stack (index 0 = top-most dish, which has nothing
stacked above it).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ellipses import Ellipse
from .raster import Raster
from .stack_recon import ParamMatrix

PATCH_H = 50
PATCH_W = 100


@dataclass(frozen=True)
class ClassLabel:
    index: int
    name: str

    def __post_init__(self):
        if not 0 <= self.index <= 7:
            raise ValueError("class index must be 0..7")


@dataclass(frozen=True)
class DishPatch:
    pixels: np.ndarray  # (50, 100, 3) in [0, 1]
    label: ClassLabel | None = None

    def __post_init__(self):
        if self.pixels.shape != (PATCH_H, PATCH_W, 3):
            raise ValueError(f"patch must be {PATCH_H}x{PATCH_W}x3, "
                             f"got {self.pixels.shape}")


def _bilinear_sample(data: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample (h, w, 3) data at float coords; outside the image reads 0."""
    h, w = data.shape[:2]
    inside = (xs >= 0) & (xs <= w - 1) & (ys >= 0) & (ys <= h - 1)
    xc = np.clip(xs, 0, w - 1)
    yc = np.clip(ys, 0, h - 1)
    x0 = np.floor(xc).astype(int)
    y0 = np.floor(yc).astype(int)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xc - x0)[..., None]
    fy = (yc - y0)[..., None]
    top = data[y0, x0] * (1 - fx) + data[y0, x1] * fx
    bot = data[y1, x0] * (1 - fx) + data[y1, x1] * fx
    out = top * (1 - fy) + bot * fy
    out[~inside] = 0.0
    return out


def _warp_grid(e: Ellipse, diameter: int) -> tuple[np.ndarray, np.ndarray]:
    """Source image coords for each patch pixel of the circle warp."""
    c = (diameter - 1) / 2.0
    r = diameter / 2.0
    u = (np.arange(diameter) - c) / r
    uu, vv = np.meshgrid(u, u)  # vv: rows (down), uu: cols (right)
    ca, sa = np.cos(e.alpha), np.sin(e.alpha)
    # unit-circle point -> ellipse: center + R(alpha) @ diag(A, B)
    sx = e.p + ca * e.A * uu - sa * e.B * vv
    sy = e.q + sa * e.A * uu + ca * e.B * vv
    return sx, sy


def warp_to_circle(img: Raster, e: Ellipse, diameter: int = 100) -> Raster:
    """Affine warp mapping the ellipse onto a centered circle patch."""
    if img.channels != 3:
        raise ValueError("warp_to_circle expects a 3-channel raster")
    if e.B <= 0:
        raise ValueError("degenerate ellipse")
    sx, sy = _warp_grid(e, diameter)
    return Raster(np.clip(_bilinear_sample(img.data, sx, sy), 0.0, 1.0))


def extract_patch(img: Raster, stack: ParamMatrix, i: int,
                  label: ClassLabel | None = None) -> DishPatch:
    """Warp dish i (top-down index), zero out the dish stacked directly
    above it, and keep the lower half."""
    top_down = list(reversed(stack.rows))
    if not 0 <= i < len(top_down):
        raise IndexError("dish index out of range")
    dish = top_down[i]
    patch = warp_to_circle(img, dish, PATCH_W)
    pixels = patch.data.copy()
    if i > 0:
        upper = top_down[i - 1]
        sx, sy = _warp_grid(dish, PATCH_W)
        pts = np.column_stack([sx.ravel(), sy.ravel()])
        ca, sa = np.cos(upper.alpha), np.sin(upper.alpha)
        dx = pts[:, 0] - upper.p
        dy = pts[:, 1] - upper.q
        u = (ca * dx + sa * dy) / upper.A
        v = (-sa * dx + ca * dy) / upper.B
        covered = (np.hypot(u, v) <= 1.0).reshape(sx.shape)
        pixels[covered] = 0.0
    lower = pixels[PATCH_W // 2:, :, :]
    return DishPatch(pixels=lower, label=label)


def export_dataset(patches: list[tuple[DishPatch, str, int]],
                   out_dir: str | Path) -> Path:
    """Write patch PNGs plus a manifest for training.

    `patches` entries are (patch, source_image_name, dish_index); each
    patch must carry a label. Returns the manifest path. Manifest lines:
    file name, label index, label name, source image, dish index.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = []
    for n, (patch, source, dish_idx) in enumerate(patches):
        if patch.label is None:
            raise ValueError("exported patches must be labeled")
        name = f"patch_{n:05d}.png"
        Raster(patch.pixels).save(out / name)
        lines.append(f"{name}\t{patch.label.index}\t{patch.label.name}"
                     f"\t{source}\t{dish_idx}")
    manifest = out / "manifest.tsv"
    manifest.write_text("\n".join(lines) + "\n")
    return manifest


def load_dataset(manifest_path: str | Path,
                 palette_names: list[str] | None = None) -> list[DishPatch]:
    """Read an exported patch dataset back as labeled DishPatch objects."""
    manifest = Path(manifest_path)
    patches = []
    for line in manifest.read_text().splitlines():
        if not line.strip():
            continue
        name, idx, label_name, _src, _dish = line.split("\t")
        raster = Raster.load(manifest.parent / name)
        patches.append(DishPatch(pixels=raster.data,
                                 label=ClassLabel(int(idx), label_name)))
    return patches
