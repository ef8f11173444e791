from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from deckgen.raster import RasterImage

DATA_DIR = Path(__file__).parent / "data"


def solid_image(width: int, height: int, color=(255, 255, 255)) -> RasterImage:
    px = np.empty((height, width, 3), dtype=np.uint8)
    px[:, :] = color
    return RasterImage(px)


def planted_rect_image(
    width: int = 400,
    height: int = 400,
    rect=(40, 40, 120, 80),
    bg=(255, 255, 255),
    fg=(0, 0, 255),
) -> RasterImage:
    px = np.empty((height, width, 3), dtype=np.uint8)
    px[:, :] = bg
    x, y, w, h = rect
    px[y : y + h, x : x + w] = fg
    return RasterImage(px)


def coordinate_image(width: int, height: int) -> RasterImage:
    """Pixel (row, col) encodes its own coordinates: (col, row, col^row)."""
    px = np.zeros((height, width, 3), dtype=np.uint8)
    cols = np.arange(width, dtype=np.uint8)
    rows = np.arange(height, dtype=np.uint8)
    px[:, :, 0] = cols[None, :]
    px[:, :, 1] = rows[:, None]
    px[:, :, 2] = cols[None, :] ^ rows[:, None]
    return RasterImage(px)


@pytest.fixture
def data_dir() -> Path:
    return DATA_DIR
