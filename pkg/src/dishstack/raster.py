"""Image representation and preprocessing.

Intensities are float64 in [0, 1] everywhere inside the pipeline; 8-bit
quantization happens only at file I/O.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

# Rec.601 luma weights
_LUMA = np.array([0.299, 0.587, 0.114])


class RasterError(ValueError):
    pass


class ChannelError(RasterError):
    """Raised when an operation receives the wrong channel count."""


@dataclass(frozen=True)
class Raster:
    """A width x height image with 1 or 3 channels, row-major float data."""

    data: np.ndarray  # shape (h, w) or (h, w, 3), float64 in [0, 1]

    def __post_init__(self):
        d = self.data
        if d.ndim == 2:
            pass
        elif d.ndim == 3 and d.shape[2] == 3:
            pass
        else:
            raise RasterError(f"bad raster shape {d.shape}")
        if d.size and (d.min() < 0.0 or d.max() > 1.0):
            raise RasterError("intensities must lie in [0, 1]")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else 3

    @staticmethod
    def from_array(arr: np.ndarray) -> "Raster":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim == 3 and arr.shape[2] == 1:
            arr = arr[:, :, 0]
        return Raster(np.clip(arr, 0.0, 1.0))

    @staticmethod
    def load(path: str | Path) -> "Raster":
        img = Image.open(path)
        if img.mode in ("L", "I;16", "I"):
            arr = np.asarray(img.convert("L"), dtype=np.float64) / 255.0
        else:
            arr = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
        return Raster(arr)

    def save(self, path: str | Path) -> None:
        arr = np.round(self.data * 255.0).astype(np.uint8)
        Image.fromarray(arr).save(path)


def to_grayscale(img: Raster) -> Raster:
    """Rec.601 luma conversion of a 3-channel raster."""
    if img.channels != 3:
        raise ChannelError("to_grayscale expects a 3-channel raster")
    gray = img.data @ _LUMA
    return Raster(np.clip(gray, 0.0, 1.0))


def resize_max_side(img: Raster, limit: int = 800) -> Raster:
    """Scale down so the larger side is at most `limit` px (bilinear)."""
    if limit < 1:
        raise RasterError("limit must be >= 1")
    longest = max(img.width, img.height)
    if longest <= limit:
        return img
    scale = limit / longest
    new_w = max(1, round(img.width * scale))
    new_h = max(1, round(img.height * scale))
    return _bilinear_resize(img, new_w, new_h)


def _bilinear_resize(img: Raster, new_w: int, new_h: int) -> Raster:
    h, w = img.height, img.width
    # align pixel centers
    xs = (np.arange(new_w) + 0.5) * (w / new_w) - 0.5
    ys = (np.arange(new_h) + 0.5) * (h / new_h) - 0.5
    xs = np.clip(xs, 0, w - 1)
    ys = np.clip(ys, 0, h - 1)
    x0 = np.floor(xs).astype(int)
    y0 = np.floor(ys).astype(int)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xs - x0)[None, :]
    fy = (ys - y0)[:, None]
    d = img.data
    if d.ndim == 3:
        fx = fx[:, :, None]
        fy = fy[:, :, None]
    top = d[np.ix_(y0, x0)] * (1 - fx) + d[np.ix_(y0, x1)] * fx
    bot = d[np.ix_(y1, x0)] * (1 - fx) + d[np.ix_(y1, x1)] * fx
    out = top * (1 - fy) + bot * fy
    return Raster(np.clip(out, 0.0, 1.0))


def equalize_histogram(img: Raster) -> Raster:
    """256-bin CDF remapping; constant images map to full intensity."""
    if img.channels != 1:
        raise ChannelError("equalize_histogram expects a 1-channel raster")
    q = np.minimum((img.data * 256).astype(int), 255)
    hist = np.bincount(q.ravel(), minlength=256)
    cdf = np.cumsum(hist) / q.size
    return Raster(cdf[q])


def gaussian_blur(img: Raster, sigma: float) -> Raster:
    """Separable Gaussian blur, clamp-to-edge borders, radius ceil(3*sigma)."""
    if img.channels != 1:
        raise ChannelError("gaussian_blur expects a 1-channel raster")
    if sigma <= 0:
        raise RasterError("sigma must be positive")
    return Raster(np.clip(_gaussian_blur_array(img.data, sigma), 0.0, 1.0))


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(np.ceil(3 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _gaussian_blur_array(data: np.ndarray, sigma: float) -> np.ndarray:
    k = _gaussian_kernel(sigma)
    radius = (len(k) - 1) // 2
    padded = np.pad(data, radius, mode="edge")
    # horizontal then vertical pass
    tmp = np.zeros((padded.shape[0], data.shape[1]))
    for i, kv in enumerate(k):
        tmp += kv * padded[:, i:i + data.shape[1]]
    out = np.zeros_like(data)
    for i, kv in enumerate(k):
        out += kv * tmp[i:i + data.shape[0], :]
    return out
