"""Decoded raster images: in-memory representation, file I/O, color math.

Pixels are kept as uint8 numpy arrays, (H, W) for grayscale and (H, W, 3)
for RGB. Color conversion is BT.601 full range, matching common JPEG
conventions.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import InvalidArgumentError

GRAY = "gray"
RGB = "rgb"


@dataclass(frozen=True)
class RasterImage:
    pixels: np.ndarray
    colorspace: str

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.dtype != np.uint8:
            raise InvalidArgumentError(f"pixels must be uint8, got {px.dtype}")
        if self.colorspace == GRAY:
            if px.ndim != 2:
                raise InvalidArgumentError("gray image must be 2-D")
        elif self.colorspace == RGB:
            if px.ndim != 3 or px.shape[2] != 3:
                raise InvalidArgumentError("rgb image must be (H, W, 3)")
        else:
            raise InvalidArgumentError(f"unknown colorspace {self.colorspace!r}")
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def luma(self) -> np.ndarray:
        """Luminance plane as float64 in [0, 255]."""
        if self.colorspace == GRAY:
            return self.pixels.astype(np.float64)
        return rgb_to_luma(self.pixels)

    def luma_u8(self) -> np.ndarray:
        """Luminance plane rounded to uint8."""
        if self.colorspace == GRAY:
            return self.pixels
        return np.clip(np.rint(rgb_to_luma(self.pixels)), 0, 255).astype(np.uint8)


def from_gray(plane: np.ndarray) -> RasterImage:
    return RasterImage(np.ascontiguousarray(plane, dtype=np.uint8), GRAY)


def from_rgb(pixels: np.ndarray) -> RasterImage:
    return RasterImage(np.ascontiguousarray(pixels, dtype=np.uint8), RGB)


def rgb_to_luma(rgb: np.ndarray) -> np.ndarray:
    rgb = rgb.astype(np.float64)
    return 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]


def rgb_to_ycbcr(rgb: np.ndarray) -> np.ndarray:
    """BT.601 full-range RGB -> YCbCr, float64 output stacked on axis -1."""
    rgb = rgb.astype(np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = -0.168735892 * r - 0.331264108 * g + 0.5 * b + 128.0
    cr = 0.5 * r - 0.418687589 * g - 0.081312411 * b + 128.0
    return np.stack([y, cb, cr], axis=-1)


def ycbcr_to_rgb(y: np.ndarray, cb: np.ndarray, cr: np.ndarray) -> np.ndarray:
    """BT.601 full-range YCbCr -> RGB uint8 with clipping."""
    y = y.astype(np.float64)
    cb = cb.astype(np.float64) - 128.0
    cr = cr.astype(np.float64) - 128.0
    r = y + 1.402 * cr
    g = y - 0.344136286 * cb - 0.714136286 * cr
    b = y + 1.772 * cb
    rgb = np.stack([r, g, b], axis=-1)
    return np.clip(np.rint(rgb), 0, 255).astype(np.uint8)


def read_image(path) -> RasterImage:
    """Read a PNG or PPM/PGM file (JPEG inputs go through codec.decode)."""
    path = Path(path)
    with Image.open(path) as im:
        if im.mode in ("L", "I;16", "I"):
            plane = np.asarray(im.convert("L"), dtype=np.uint8)
            return from_gray(plane)
        return from_rgb(np.asarray(im.convert("RGB"), dtype=np.uint8))


def write_png(image: RasterImage, path) -> None:
    Image.fromarray(image.pixels).save(path, format="PNG")


def resize_max_dim(image: RasterImage, max_dim: int) -> RasterImage:
    """Bilinear downscale so max(width, height) == max_dim; no-op if smaller."""
    h, w = image.height, image.width
    longest = max(h, w)
    if longest <= max_dim:
        return image
    scale = max_dim / longest
    new_w = max(1, round(w * scale))
    new_h = max(1, round(h * scale))
    im = Image.fromarray(image.pixels)
    out = np.asarray(im.resize((new_w, new_h), Image.BILINEAR), dtype=np.uint8)
    return RasterImage(out, image.colorspace)
