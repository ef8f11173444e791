"""Recursive color-gradient segmentation of slide images.

A slide image is divided into a g x g grid; cells whose mean gradient
magnitude rises strictly above a multiple of the median cell score are
activated, holes in the activation mask are filled, and 4-connected groups
of active cells become regions. Each region is cropped and segmented again
up to a depth bound. The fraction of active cells in the depth-0 filled
mask doubles as the coverage feature used by the complexity metric.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .raster import GradientField, RasterImage, crop, sobel_magnitude, to_grayscale


@dataclass(frozen=True)
class GridMask:
    """Boolean activation mask over a g x g cell grid."""

    cells: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.cells, dtype=bool)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError(f"mask must be square, got shape {c.shape}")
        if c.shape[0] < 2:
            raise ValueError("grid dimension must be >= 2")
        c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "cells", c)

    @property
    def g(self) -> int:
        return self.cells.shape[0]


@dataclass(frozen=True)
class Region:
    """A segmented block: bbox in the root image frame plus its crop."""

    bbox: tuple[int, int, int, int]
    depth: int
    image: RasterImage

    def to_dict(self) -> dict:
        x, y, w, h = self.bbox
        return {"bbox": [x, y, w, h], "depth": self.depth}


@dataclass(frozen=True)
class CgsegConfig:
    grid: int = 20
    threshold: float = 1.5
    max_depth: int = 2

    def __post_init__(self):
        if self.grid < 2:
            raise ValueError("grid must be >= 2")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.threshold <= 0:
            raise ValueError("threshold must be positive")


def _cell_bounds(size: int, g: int) -> list[tuple[int, int]]:
    # Cell k spans floor(k*size/g) .. floor((k+1)*size/g), end-exclusive.
    return [(k * size // g, (k + 1) * size // g) for k in range(g)]


def cell_scores(grad: GradientField, g: int) -> np.ndarray:
    """Mean gradient magnitude per cell of the g x g grid, as a (g, g) array."""
    if grad.height < g or grad.width < g:
        raise ValueError(
            f"image {grad.width}x{grad.height} is smaller than the {g}x{g} grid"
        )
    rows = _cell_bounds(grad.height, g)
    cols = _cell_bounds(grad.width, g)
    scores = np.empty((g, g), dtype=np.float64)
    for i, (r0, r1) in enumerate(rows):
        for j, (c0, c1) in enumerate(cols):
            scores[i, j] = grad.magnitudes[r0:r1, c0:c1].mean()
    return scores


def activation_mask(scores: np.ndarray, threshold: float) -> GridMask:
    """Activate cells whose score is strictly above threshold * median score."""
    mid = float(np.median(scores))
    return GridMask(scores > threshold * mid)


def fill_mask(mask: GridMask) -> GridMask:
    """Fill holes: inactive cells not 4-reachable from the border become active."""
    g = mask.g
    active = mask.cells
    outside = np.zeros((g, g), dtype=bool)
    queue: deque[tuple[int, int]] = deque()
    for i in range(g):
        for j in (0, g - 1):
            if not active[i, j] and not outside[i, j]:
                outside[i, j] = True
                queue.append((i, j))
            if not active[j, i] and not outside[j, i]:
                outside[j, i] = True
                queue.append((j, i))
    while queue:
        i, j = queue.popleft()
        for ni, nj in ((i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)):
            if 0 <= ni < g and 0 <= nj < g and not active[ni, nj] and not outside[ni, nj]:
                outside[ni, nj] = True
                queue.append((ni, nj))
    return GridMask(active | ~outside)


def connected_regions(
    mask: GridMask, img_width: int, img_height: int
) -> list[tuple[int, int, int, int]]:
    """Pixel bboxes of 4-connected active components, in reading order."""
    g = mask.g
    rows = _cell_bounds(img_height, g)
    cols = _cell_bounds(img_width, g)
    seen = np.zeros((g, g), dtype=bool)
    boxes: list[tuple[int, int, int, int]] = []
    for si in range(g):
        for sj in range(g):
            if not mask.cells[si, sj] or seen[si, sj]:
                continue
            imin = imax = si
            jmin = jmax = sj
            seen[si, sj] = True
            queue = deque([(si, sj)])
            while queue:
                i, j = queue.popleft()
                imin, imax = min(imin, i), max(imax, i)
                jmin, jmax = min(jmin, j), max(jmax, j)
                for ni, nj in ((i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)):
                    if (
                        0 <= ni < g
                        and 0 <= nj < g
                        and mask.cells[ni, nj]
                        and not seen[ni, nj]
                    ):
                        seen[ni, nj] = True
                        queue.append((ni, nj))
            x0, x1 = cols[jmin][0], cols[jmax][1]
            y0, y1 = rows[imin][0], rows[imax][1]
            boxes.append((x0, y0, x1 - x0, y1 - y0))
    boxes.sort(key=lambda b: (b[1], b[0]))
    return boxes


def _segment(img: RasterImage, cfg: CgsegConfig) -> GridMask | None:
    if img.width < cfg.grid or img.height < cfg.grid:
        return None
    grad = sobel_magnitude(to_grayscale(img))
    scores = cell_scores(grad, cfg.grid)
    return fill_mask(activation_mask(scores, cfg.threshold))


def cgseg(
    img: RasterImage,
    cfg: CgsegConfig,
    depth: int = 0,
    _origin: tuple[int, int] = (0, 0),
) -> list[Region]:
    """Recursively segment ``img`` into regions, parents before children.

    Regions carry bboxes in the root image frame. Sub-images smaller than one
    grid span are emitted but not segmented further; the recursion also stops
    at ``cfg.max_depth``. Degenerate inputs yield an empty list.
    """
    if depth >= cfg.max_depth:
        return []
    mask = _segment(img, cfg)
    if mask is None:
        return []
    ox, oy = _origin
    regions: list[Region] = []
    for x, y, w, h in connected_regions(mask, img.width, img.height):
        sub = crop(img, (x, y, w, h))
        regions.append(Region(bbox=(ox + x, oy + y, w, h), depth=depth + 1, image=sub))
        regions.extend(cgseg(sub, cfg, depth + 1, (ox + x, oy + y)))
    return regions


def coverage_ratio(img: RasterImage, cfg: CgsegConfig) -> float:
    """Fraction of active cells in the depth-0 filled mask, in [0, 1]."""
    grad = sobel_magnitude(to_grayscale(img))
    scores = cell_scores(grad, cfg.grid)
    filled = fill_mask(activation_mask(scores, cfg.threshold))
    return float(filled.cells.sum()) / float(cfg.grid * cfg.grid)


def regions_to_json(regions: list[Region]) -> str:
    return json.dumps([r.to_dict() for r in regions], indent=2, sort_keys=True)


def debug_mask_png(img: RasterImage, cfg: CgsegConfig, path: str | Path) -> None:
    """Write ``img`` with active cells tinted red and region bboxes outlined."""
    p = Path(path)
    if str(p) == "" or str(p) == ".":
        raise ValueError("debug mask path must not be empty")
    out = img.pixels.astype(np.float64).copy()
    mask = _segment(img, cfg)
    if mask is not None:
        rows = _cell_bounds(img.height, cfg.grid)
        cols = _cell_bounds(img.width, cfg.grid)
        tint = np.array([255.0, 64.0, 64.0])
        for i, (r0, r1) in enumerate(rows):
            for j, (c0, c1) in enumerate(cols):
                if mask.cells[i, j]:
                    out[r0:r1, c0:c1] = 0.65 * out[r0:r1, c0:c1] + 0.35 * tint
    pixels = out.round().clip(0, 255).astype(np.uint8)
    for region in cgseg(img, cfg):
        x, y, w, h = region.bbox
        x1, y1 = x + w - 1, y + h - 1
        pixels[y, x : x1 + 1] = (0, 160, 0)
        pixels[y1, x : x1 + 1] = (0, 160, 0)
        pixels[y : y1 + 1, x] = (0, 160, 0)
        pixels[y : y1 + 1, x1] = (0, 160, 0)
    Image.fromarray(pixels, mode="RGB").save(p, format="PNG")
