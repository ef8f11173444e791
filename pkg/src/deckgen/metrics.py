"""Evaluation metrics: execution rate, SSIM, content and position similarity.

Shape inventories (extracted from decks) carry the comparable structure of a
slide; images carry its appearance. A failed execution contributes zero to
the batch score regardless of how its other numbers would have looked.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .config import SlideGeometry
from .raster import RasterImage, to_grayscale

# Standard SSIM constants: 11-tap Gaussian window, sigma 1.5, 8-bit range.
_SSIM_RADIUS = 5
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03
_SSIM_RANGE = 255.0


@dataclass(frozen=True)
class ShapeRecord:
    type_name: str
    bbox: tuple[float, float, float, float]
    text: str = ""
    style: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.bbox[2] < 0 or self.bbox[3] < 0:
            raise ValueError(f"shape extent must be non-negative, got {self.bbox}")

    @property
    def center(self) -> tuple[float, float]:
        x, y, w, h = self.bbox
        return (x + w / 2.0, y + h / 2.0)

    def to_dict(self) -> dict:
        return {
            "type_name": self.type_name,
            "bbox": list(self.bbox),
            "text": self.text,
            "style": dict(self.style),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ShapeRecord":
        return cls(
            type_name=raw["type_name"],
            bbox=tuple(float(v) for v in raw["bbox"]),
            text=raw.get("text", ""),
            style=dict(raw.get("style", {})),
        )


def load_inventory(path: str | Path) -> list[ShapeRecord]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return [ShapeRecord.from_dict(item) for item in raw]


def save_inventory(shapes: list[ShapeRecord], path: str | Path) -> None:
    Path(path).write_text(
        json.dumps([s.to_dict() for s in shapes], indent=2, sort_keys=True),
        encoding="utf-8",
    )


def _gaussian_kernel() -> np.ndarray:
    offsets = np.arange(-_SSIM_RADIUS, _SSIM_RADIUS + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (offsets / _SSIM_SIGMA) ** 2)
    return kernel / kernel.sum()


def _filter_valid(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    # Separable windowed mean over the region where the window fits entirely.
    out = np.apply_along_axis(lambda r: np.convolve(r, kernel, mode="valid"), 1, img)
    return np.apply_along_axis(lambda c: np.convolve(c, kernel, mode="valid"), 0, out)


def _resample_to(img: RasterImage, width: int, height: int) -> RasterImage:
    if img.width == width and img.height == height:
        return img
    pil = Image.fromarray(img.pixels, mode="RGB").resize(
        (width, height), Image.Resampling.BILINEAR
    )
    return RasterImage(np.asarray(pil, dtype=np.uint8))


def ssim_luma(a: np.ndarray, b: np.ndarray) -> float:
    """SSIM between two equally sized float luma arrays (unclamped mean)."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if min(a.shape) < 2 * _SSIM_RADIUS + 1:
        raise ValueError(
            f"images must be at least {2 * _SSIM_RADIUS + 1} px per side for SSIM"
        )
    x = a.astype(np.float64)
    y = b.astype(np.float64)
    kernel = _gaussian_kernel()
    ux = _filter_valid(x, kernel)
    uy = _filter_valid(y, kernel)
    uxx = _filter_valid(x * x, kernel)
    uyy = _filter_valid(y * y, kernel)
    uxy = _filter_valid(x * y, kernel)
    vx = uxx - ux * ux
    vy = uyy - uy * uy
    vxy = uxy - ux * uy
    c1 = (_SSIM_K1 * _SSIM_RANGE) ** 2
    c2 = (_SSIM_K2 * _SSIM_RANGE) ** 2
    s = ((2 * ux * uy + c1) * (2 * vxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
    return float(s.mean())


def ssim(a: RasterImage, b: RasterImage) -> float:
    """SSIM in [0, 1]; ``b`` is resampled bilinearly to ``a``'s dimensions."""
    if a.width < 1 or a.height < 1 or b.width < 1 or b.height < 1:
        raise ValueError("degenerate image")
    resampled = _resample_to(b, a.width, a.height)
    luma_a = to_grayscale(a).values.astype(np.float64)
    luma_b = to_grayscale(resampled).values.astype(np.float64)
    return min(1.0, max(0.0, ssim_luma(luma_a, luma_b)))


def _lcs_length(a: str, b: str) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for ch_a in a:
        cur = [0]
        for j, ch_b in enumerate(b, start=1):
            if ch_a == ch_b:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def text_similarity(a: str, b: str) -> float:
    """Length-normalized longest-common-subsequence ratio; 1.0 when both empty."""
    if not a and not b:
        return 1.0
    if not a or not b:
        return 0.0
    return 2.0 * _lcs_length(a, b) / (len(a) + len(b))


@dataclass(frozen=True)
class ShapeMatching:
    pairs: list[tuple[ShapeRecord, ShapeRecord]]
    unmatched_ref: list[ShapeRecord]
    unmatched_gen: list[ShapeRecord]
    ref_count: int
    gen_count: int


def match_shapes(ref: list[ShapeRecord], gen: list[ShapeRecord]) -> ShapeMatching:
    """Greedy one-to-one matching.

    Candidate pairs are ranked by same type first, then text similarity
    (descending), then center distance (ascending); index order breaks the
    remaining ties so the matching is deterministic.
    """
    candidates = []
    for i, r in enumerate(ref):
        for j, g in enumerate(gen):
            same_type = r.type_name == g.type_name
            sim = text_similarity(r.text, g.text)
            dist = abs(r.center[0] - g.center[0]) + abs(r.center[1] - g.center[1])
            candidates.append((0 if same_type else 1, -sim, dist, i, j))
    candidates.sort()
    used_ref: set[int] = set()
    used_gen: set[int] = set()
    pairs: list[tuple[ShapeRecord, ShapeRecord]] = []
    for type_rank, _neg_sim, _dist, i, j in candidates:
        if type_rank != 0:
            break  # cross-type pairs never match
        if i in used_ref or j in used_gen:
            continue
        used_ref.add(i)
        used_gen.add(j)
        pairs.append((ref[i], gen[j]))
    return ShapeMatching(
        pairs=pairs,
        unmatched_ref=[r for i, r in enumerate(ref) if i not in used_ref],
        unmatched_gen=[g for j, g in enumerate(gen) if j not in used_gen],
        ref_count=len(ref),
        gen_count=len(gen),
    )


def content_similarity(matching: ShapeMatching) -> float:
    """Sum of per-pair text scores over max(|ref|, |gen|); 1.0 for two empties."""
    denom = max(matching.ref_count, matching.gen_count)
    if denom == 0:
        return 1.0
    total = sum(text_similarity(r.text, g.text) for r, g in matching.pairs)
    return min(1.0, total / denom)


def position_similarity(matching: ShapeMatching, geom: SlideGeometry) -> float:
    """Center-offset score per pair, normalized by slide extent, then averaged."""
    denom = max(matching.ref_count, matching.gen_count)
    if denom == 0:
        return 1.0
    span = geom.slide_width + geom.slide_height
    total = 0.0
    for r, g in matching.pairs:
        offset = abs(r.center[0] - g.center[0]) + abs(r.center[1] - g.center[1])
        total += min(1.0, max(0.0, 1.0 - offset / span))
    return min(1.0, total / denom)


@dataclass(frozen=True)
class SampleMetrics:
    sample_id: str
    executed: bool
    content: float | None = None
    position: float | None = None
    ssim: float | None = None
    clip: float | None = None

    def available(self) -> list[float]:
        return [v for v in (self.content, self.position, self.ssim, self.clip) if v is not None]

    def contribution(self) -> float:
        """Per-sample score on the 0-100 scale; failed executions score zero."""
        if not self.executed:
            return 0.0
        values = self.available()
        if not values:
            return 0.0
        return 100.0 * sum(values) / len(values)


@dataclass(frozen=True)
class BatchReport:
    execution_rate: float
    metric_means: dict
    overall: float
    samples: list[SampleMetrics]
    includes_clip: bool

    def to_dict(self) -> dict:
        return {
            "execution_rate": self.execution_rate,
            "metric_means": dict(self.metric_means),
            "overall": self.overall,
            "includes_clip": self.includes_clip,
            "samples": [
                {
                    "id": s.sample_id,
                    "executed": s.executed,
                    "content": s.content,
                    "position": s.position,
                    "ssim": s.ssim,
                    "clip": s.clip,
                    "contribution": s.contribution(),
                }
                for s in self.samples
            ],
        }


def evaluate_sample(
    sample_id: str,
    executed: bool,
    ref_shapes: list[ShapeRecord] | None = None,
    gen_shapes: list[ShapeRecord] | None = None,
    ref_image: RasterImage | None = None,
    gen_image: RasterImage | None = None,
    geom: SlideGeometry = SlideGeometry(),
    clip: float | None = None,
) -> SampleMetrics:
    """Score one sample; structural and visual metrics are each optional."""
    if not executed:
        return SampleMetrics(sample_id=sample_id, executed=False)
    content = position = visual = None
    if ref_shapes is not None and gen_shapes is not None:
        matching = match_shapes(ref_shapes, gen_shapes)
        content = content_similarity(matching)
        position = position_similarity(matching, geom)
    if ref_image is not None and gen_image is not None:
        visual = ssim(ref_image, gen_image)
    return SampleMetrics(
        sample_id=sample_id,
        executed=True,
        content=content,
        position=position,
        ssim=visual,
        clip=clip,
    )


def batch_report(samples: list[SampleMetrics]) -> BatchReport:
    """Aggregate: execution rate, executed-only metric means, zero-on-failure overall."""
    if not samples:
        raise ValueError("cannot report on an empty batch")
    executed = [s for s in samples if s.executed]
    execution_rate = 100.0 * len(executed) / len(samples)
    means = {}
    for name in ("content", "position", "ssim", "clip"):
        values = [getattr(s, name) for s in executed if getattr(s, name) is not None]
        means[name] = 100.0 * sum(values) / len(values) if values else None
    overall = sum(s.contribution() for s in samples) / len(samples)
    return BatchReport(
        execution_rate=execution_rate,
        metric_means=means,
        overall=overall,
        samples=list(samples),
        includes_clip=any(s.clip is not None for s in samples),
    )


def merge_clip_scores(
    samples: list[SampleMetrics], clip_by_id: dict[str, float]
) -> list[SampleMetrics]:
    """Attach externally computed visual-embedding scores by sample id."""
    out = []
    for s in samples:
        clip = clip_by_id.get(s.sample_id, s.clip)
        out.append(
            SampleMetrics(
                sample_id=s.sample_id,
                executed=s.executed,
                content=s.content,
                position=s.position,
                ssim=s.ssim,
                clip=clip,
            )
        )
    return out


def format_report_table(report: BatchReport) -> str:
    lines = [
        f"{'sample':<24} {'exec':<5} {'content':>8} {'position':>9} {'ssim':>8} {'score':>8}",
    ]

    def fmt(v):
        return f"{100 * v:8.2f}" if v is not None else f"{'-':>8}"

    for s in report.samples:
        lines.append(
            f"{s.sample_id:<24} {'yes' if s.executed else 'no':<5} "
            f"{fmt(s.content)} {fmt(s.position):>9} {fmt(s.ssim)} {s.contribution():8.2f}"
        )
    lines.append("")
    lines.append(f"execution rate: {report.execution_rate:.1f}%")
    lines.append(f"overall score:  {report.overall:.2f}")
    return "\n".join(lines)
