from __future__ import annotations

import statistics

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deckgen.cgseg import (
    CgsegConfig,
    GridMask,
    activation_mask,
    cell_scores,
    cgseg,
    connected_regions,
    coverage_ratio,
    debug_mask_png,
    fill_mask,
)
from deckgen.raster import load_image, sobel_magnitude, to_grayscale

from .conftest import planted_rect_image, solid_image

CFG = CgsegConfig(grid=20, threshold=1.5, max_depth=2)


def grad_of(img):
    return sobel_magnitude(to_grayscale(img))


def fill_oracle(cells: np.ndarray) -> np.ndarray:
    """Hole filling by exterior reachability, recomputed independently."""
    g = cells.shape[0]
    outside = set()
    stack = [
        (i, j)
        for i in range(g)
        for j in range(g)
        if (i in (0, g - 1) or j in (0, g - 1)) and not cells[i, j]
    ]
    while stack:
        i, j = stack.pop()
        if (i, j) in outside:
            continue
        outside.add((i, j))
        for ni, nj in ((i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)):
            if 0 <= ni < g and 0 <= nj < g and not cells[ni, nj] and (ni, nj) not in outside:
                stack.append((ni, nj))
    out = cells.copy()
    for i in range(g):
        for j in range(g):
            if not cells[i, j] and (i, j) not in outside:
                out[i, j] = True
    return out


def components_oracle(cells: np.ndarray) -> list[set[tuple[int, int]]]:
    g = cells.shape[0]
    seen: set[tuple[int, int]] = set()
    comps = []
    for i in range(g):
        for j in range(g):
            if not cells[i, j] or (i, j) in seen:
                continue
            comp = set()
            stack = [(i, j)]
            while stack:
                ci, cj = stack.pop()
                if (ci, cj) in comp:
                    continue
                comp.add((ci, cj))
                seen.add((ci, cj))
                for ni, nj in ((ci - 1, cj), (ci + 1, cj), (ci, cj - 1), (ci, cj + 1)):
                    if 0 <= ni < g and 0 <= nj < g and cells[ni, nj] and (ni, nj) not in comp:
                        stack.append((ni, nj))
            comps.append(comp)
    return comps


class TestCellScores:
    def test_constant_image_scores_zero(self):
        scores = cell_scores(grad_of(solid_image(100, 100, (9, 9, 9))), 10)
        assert (scores == 0).all()

    def test_one_busy_cell(self):
        # Edges strictly inside cell (2, 3) of a 10x10 grid on 100x100 px.
        img = planted_rect_image(100, 100, rect=(33, 23, 4, 4), fg=(0, 0, 0))
        scores = cell_scores(grad_of(img), 10)
        assert scores[2, 3] > 0
        nonzero = {(i, j) for i in range(10) for j in range(10) if scores[i, j] > 0}
        assert nonzero == {(2, 3)}

    def test_exact_cell_division(self):
        scores = cell_scores(grad_of(solid_image(100, 100)), 10)
        assert scores.shape == (10, 10)
        # Divisible case: mean over exactly 10x10 px per cell; verify by
        # recomputing one cell by hand on a non-trivial image.
        img = planted_rect_image(100, 100, rect=(5, 5, 20, 20), fg=(0, 0, 0))
        grad = grad_of(img)
        scores = cell_scores(grad, 10)
        manual = grad.magnitudes[10:20, 0:10].mean()
        assert scores[1, 0] == pytest.approx(manual)

    def test_rejects_small_image(self):
        with pytest.raises(ValueError):
            cell_scores(grad_of(solid_image(5, 30)), 10)


class TestActivationMask:
    def test_all_equal_never_activates(self):
        scores = np.full((4, 4), 3.7)
        for t in (1.0, 1.5, 2.0):
            assert not activation_mask(scores, t).cells.any()

    def test_all_zero(self):
        assert not activation_mask(np.zeros((5, 5)), 1.5).cells.any()

    def test_single_spike(self):
        scores = np.zeros((4, 4))
        scores[1, 2] = 100.0
        median = statistics.median(scores.flatten().tolist())  # independent median
        assert median == 0.0
        mask = activation_mask(scores, 1.5)
        assert mask.cells.sum() == 1
        assert mask.cells[1, 2]

    def test_even_count_median_is_middle_mean(self):
        scores = np.array([[1.0, 2.0], [3.0, 4.0]])
        # median = 2.5; threshold 1.2 * 2.5 = 3.0, strict
        mask = activation_mask(scores, 1.2)
        assert mask.cells.tolist() == [[False, False], [False, True]]

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0.5, 3.0))
    def test_lowering_threshold_is_monotone(self, seed, t):
        rng = np.random.default_rng(seed)
        scores = rng.random((6, 6)) * 10
        high = activation_mask(scores, t).cells
        low = activation_mask(scores, t * 0.7).cells
        assert (low | high == low).all()  # high is a subset of low


class TestFillMask:
    def test_all_inactive_unchanged(self):
        mask = GridMask(np.zeros((6, 6), dtype=bool))
        assert not fill_mask(mask).cells.any()

    def test_ring_interior_fills(self):
        cells = np.zeros((6, 6), dtype=bool)
        cells[1, 1:5] = cells[4, 1:5] = True
        cells[1:5, 1] = cells[1:5, 4] = True
        filled = fill_mask(GridMask(cells))
        assert filled.cells[2, 2] and filled.cells[3, 3]
        np.testing.assert_array_equal(filled.cells, fill_oracle(cells))

    def test_all_active_unchanged(self):
        mask = GridMask(np.ones((4, 4), dtype=bool))
        assert fill_mask(mask).cells.all()

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_matches_reachability_oracle(self, seed):
        rng = np.random.default_rng(seed)
        cells = rng.random((7, 7)) < 0.4
        filled = fill_mask(GridMask(cells))
        np.testing.assert_array_equal(filled.cells, fill_oracle(cells))
        assert (filled.cells | cells == filled.cells).all()  # never deactivates


class TestConnectedRegions:
    def test_empty_mask(self):
        assert connected_regions(GridMask(np.zeros((4, 4), dtype=bool)), 80, 80) == []

    def test_diagonal_cells_are_separate(self):
        cells = np.zeros((4, 4), dtype=bool)
        cells[0, 0] = cells[1, 1] = True
        assert len(connected_regions(GridMask(cells), 80, 80)) == 2

    def test_l_shape_single_region(self):
        cells = np.zeros((4, 4), dtype=bool)
        cells[1, 1] = cells[2, 1] = cells[2, 2] = True
        boxes = connected_regions(GridMask(cells), 80, 80)
        assert len(boxes) == 1
        assert boxes[0] == (20, 20, 40, 40)
        comps = components_oracle(cells)
        assert len(comps) == 1

    def test_reading_order(self):
        cells = np.zeros((4, 4), dtype=bool)
        cells[0, 3] = cells[2, 0] = cells[0, 0] = True
        boxes = connected_regions(GridMask(cells), 80, 80)
        assert boxes == [(0, 0, 20, 20), (60, 0, 20, 20), (0, 40, 20, 20)]

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_component_count_matches_oracle(self, seed):
        rng = np.random.default_rng(seed)
        cells = rng.random((6, 6)) < 0.35
        boxes = connected_regions(GridMask(cells), 60, 60)
        assert len(boxes) == len(components_oracle(cells))


class TestCgseg:
    def test_depth_cap_returns_empty(self):
        img = planted_rect_image()
        assert cgseg(img, CFG, depth=CFG.max_depth) == []

    def test_uniform_image_empty(self):
        assert cgseg(solid_image(400, 400), CFG) == []

    def test_rectangle_recovery(self):
        rect = (40, 40, 120, 80)
        img = planted_rect_image(rect=rect)
        regions = cgseg(img, CFG)
        depth1 = [r for r in regions if r.depth == 1]
        assert len(depth1) == 1
        x, y, w, h = depth1[0].bbox
        rx, ry, rw, rh = rect
        cell = 400 // CFG.grid
        assert abs(x - rx) <= cell
        assert abs(y - ry) <= cell
        assert abs((x + w) - (rx + rw)) <= cell
        assert abs((y + h) - (ry + rh)) <= cell

    def test_determinism(self):
        img = planted_rect_image()
        a = cgseg(img, CFG)
        b = cgseg(img, CFG)
        assert [(r.bbox, r.depth) for r in a] == [(r.bbox, r.depth) for r in b]

    def test_frame_containment_and_depth_bound(self):
        rng = np.random.default_rng(3)
        px = rng.integers(0, 256, size=(200, 300, 3), dtype=np.uint8)
        from deckgen.raster import RasterImage

        for region in cgseg(RasterImage(px), CFG):
            x, y, w, h = region.bbox
            assert 0 <= x and 0 <= y and x + w <= 300 and y + h <= 200
            assert 1 <= region.depth <= CFG.max_depth
            assert (region.image.width, region.image.height) == (w, h)

    def test_translation_by_one_cell(self):
        cell = 400 // CFG.grid
        a = cgseg(planted_rect_image(rect=(40, 40, 120, 80)), CFG)
        b = cgseg(planted_rect_image(rect=(40 + cell, 40, 120, 80)), CFG)
        a1 = [r.bbox for r in a if r.depth == 1]
        b1 = [r.bbox for r in b if r.depth == 1]
        assert len(a1) == len(b1) == 1
        ax, ay, aw, ah = a1[0]
        bx, by, bw, bh = b1[0]
        assert (bx - ax, by - ay, bw - aw, bh - ah) == (cell, 0, 0, 0)

    def test_small_region_emitted_but_not_recursed(self):
        # An 8x8 blob activates one root cell -> a 20x20 crop at depth 1.
        # Inside that crop the cells are 1 px, so the depth-2 sub-regions are
        # smaller than one grid span and must stop recursing even though
        # max_depth would allow a third level.
        cfg = CgsegConfig(grid=20, threshold=1.5, max_depth=3)
        img = planted_rect_image(rect=(45, 45, 8, 8), fg=(0, 0, 0))
        regions = cgseg(img, cfg)
        assert regions, "expected the small blob to be emitted"
        small = [r for r in regions if r.image.width < 20 or r.image.height < 20]
        assert small, "expected sub-grid-size regions to be emitted"
        assert max(r.depth for r in regions) == 2


class TestCoverageRatio:
    def test_uniform_is_zero(self):
        assert coverage_ratio(solid_image(400, 400), CFG) == 0.0

    def test_never_full_for_threshold_above_one(self):
        rng = np.random.default_rng(11)
        from deckgen.raster import RasterImage

        px = rng.integers(0, 256, size=(400, 400, 3), dtype=np.uint8)
        # With T >= 1 the cells at or below the median can never activate.
        assert coverage_ratio(RasterImage(px), CFG) < 1.0

    def test_rectangle_fixture_recount(self):
        img = planted_rect_image()
        grad = grad_of(img)
        scores = cell_scores(grad, CFG.grid)
        filled = fill_mask(activation_mask(scores, CFG.threshold))
        recount = sum(
            1 for i in range(CFG.grid) for j in range(CFG.grid) if filled.cells[i, j]
        )
        assert coverage_ratio(img, CFG) == pytest.approx(recount / CFG.grid**2)
        assert recount > 0


class TestDebugMask:
    def test_uniform_is_untinted_copy(self, tmp_path):
        img = solid_image(100, 100, (200, 100, 50))
        out = tmp_path / "mask.png"
        debug_mask_png(img, CfgSmall(), out)
        reread = load_image(out)
        assert (reread.pixels == img.pixels).all()

    def test_rectangle_matches_golden(self, tmp_path, data_dir):
        img = planted_rect_image()
        out = tmp_path / "mask.png"
        debug_mask_png(img, CFG, out)
        golden = load_image(data_dir / "golden_debug_mask.png")
        assert (load_image(out).pixels == golden.pixels).all()

    def test_empty_path_errors(self):
        with pytest.raises((ValueError, OSError)):
            debug_mask_png(solid_image(100, 100), CFG, "")


def CfgSmall():
    return CgsegConfig(grid=10, threshold=1.5, max_depth=2)
