"""Image loading, grayscale conversion, Sobel gradients, and cropping.

All operations are pure functions on immutable array-backed images and are
safe to call concurrently.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

# Rec. 601 luma weights.
_LUMA_R = 0.299
_LUMA_G = 0.587
_LUMA_B = 0.114

_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
_SOBEL_Y = np.array([[-1, -2, -1], [0, 0, 0], [1, 2, 1]], dtype=np.float64)


@dataclass(frozen=True)
class RasterImage:
    """8-bit RGB image; ``pixels`` has shape (height, width, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) pixel array, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("image dimensions must be positive")
        px = px.copy()
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class GrayImage:
    """8-bit single-channel image; ``values`` has shape (height, width)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.uint8)
        if v.ndim != 2:
            raise ValueError(f"expected (H, W) value array, got shape {v.shape}")
        if v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError("image dimensions must be positive")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class GradientField:
    """Per-pixel non-negative gradient magnitudes, same shape as the source."""

    magnitudes: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.magnitudes, dtype=np.float64)
        if m.ndim != 2:
            raise ValueError(f"expected (H, W) magnitude array, got shape {m.shape}")
        if (m < 0).any():
            raise ValueError("gradient magnitudes must be non-negative")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "magnitudes", m)

    @property
    def width(self) -> int:
        return self.magnitudes.shape[1]

    @property
    def height(self) -> int:
        return self.magnitudes.shape[0]


def load_image(path: str | Path) -> RasterImage:
    """Decode a PNG file; alpha, if present, is composited over white."""
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"no such image file: {p}")
    try:
        with Image.open(p) as im:
            im.load()
            if im.mode in ("RGBA", "LA", "PA") or (im.mode == "P" and "transparency" in im.info):
                rgba = im.convert("RGBA")
                background = Image.new("RGBA", rgba.size, (255, 255, 255, 255))
                im = Image.alpha_composite(background, rgba).convert("RGB")
            else:
                im = im.convert("RGB")
            return RasterImage(np.asarray(im, dtype=np.uint8))
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise ValueError(f"malformed image data in {p}: {exc}") from exc


def to_grayscale(img: RasterImage) -> GrayImage:
    """Rec. 601 luma: round(0.299 R + 0.587 G + 0.114 B), clamped to [0, 255]."""
    rgb = img.pixels.astype(np.float64)
    luma = _LUMA_R * rgb[:, :, 0] + _LUMA_G * rgb[:, :, 1] + _LUMA_B * rgb[:, :, 2]
    return GrayImage(np.clip(np.round(luma), 0, 255).astype(np.uint8))


def sobel_magnitude(gray: GrayImage) -> GradientField:
    """Gradient magnitude sqrt(Gx^2 + Gy^2) with 3x3 Sobel kernels.

    Borders use edge replication so constant images stay identically zero.
    """
    v = gray.values.astype(np.float64)
    padded = np.pad(v, 1, mode="edge")
    gx = np.zeros_like(v)
    gy = np.zeros_like(v)
    h, w = v.shape
    for di in range(3):
        for dj in range(3):
            window = padded[di : di + h, dj : dj + w]
            if _SOBEL_X[di, dj]:
                gx += _SOBEL_X[di, dj] * window
            if _SOBEL_Y[di, dj]:
                gy += _SOBEL_Y[di, dj] * window
    return GradientField(np.hypot(gx, gy))


def to_png_bytes(img: RasterImage) -> bytes:
    import io

    buf = io.BytesIO()
    Image.fromarray(img.pixels, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def crop(img: RasterImage, rect: tuple[int, int, int, int]) -> RasterImage:
    """Copy the w*h region at (x, y); the rect must lie fully inside the image."""
    x, y, w, h = rect
    if w < 1 or h < 1:
        raise ValueError(f"crop rect must have positive size, got {rect}")
    if x < 0 or y < 0 or x + w > img.width or y + h > img.height:
        raise ValueError(
            f"crop rect {rect} exceeds image bounds {img.width}x{img.height}"
        )
    return RasterImage(img.pixels[y : y + h, x : x + w])
