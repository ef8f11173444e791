"""Slide complexity scoring, tiering, and balanced benchmark sampling.

Each slide contributes three raw features: element count, distinct element
type count, and the coverage ratio of its reference image. Features are
sigmoid-normalized against the whole cohort, combined into a weighted score,
and the scores are clustered into simple/medium/complex tiers by 1-D KMeans.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, replace

import numpy as np

from .cgseg import CgsegConfig, coverage_ratio
from .raster import RasterImage

TIERS = ("simple", "medium", "complex")


@dataclass(frozen=True)
class ComplexityFeatures:
    element_count: int
    type_count: int
    coverage: float

    def __post_init__(self):
        if self.element_count < 0 or self.type_count < 0:
            raise ValueError("counts must be non-negative")
        if self.type_count > self.element_count:
            raise ValueError("type count cannot exceed element count")
        if not 0.0 <= self.coverage <= 1.0:
            raise ValueError(f"coverage must lie in [0, 1], got {self.coverage}")


@dataclass(frozen=True)
class ScmWeights:
    alpha: float = 1.0 / 3.0
    beta: float = 1.0 / 3.0
    gamma: float = 1.0 / 3.0
    epsilon: float = 1e-6

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValueError("weights must be non-negative")
        if abs(self.alpha + self.beta + self.gamma - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


@dataclass(frozen=True)
class ComplexityRecord:
    id: str
    features: ComplexityFeatures
    normalized: tuple[float, float, float] | None = None
    z: float | None = None
    tier: str | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "element_count": self.features.element_count,
            "type_count": self.features.type_count,
            "coverage": self.features.coverage,
            "normalized": list(self.normalized) if self.normalized else None,
            "z": self.z,
            "tier": self.tier,
        }


def features_from_inventory(
    shapes: list, img: RasterImage, cfg: CgsegConfig
) -> ComplexityFeatures:
    """Raw features for one slide: shape count, distinct type count, coverage.

    ``shapes`` is a list of shape records carrying a ``type_name`` attribute
    (or a ``type_name`` key for plain dicts); the inventory may be empty.
    """
    names = [
        s["type_name"] if isinstance(s, dict) else s.type_name for s in shapes
    ]
    return ComplexityFeatures(
        element_count=len(names),
        type_count=len(set(names)),
        coverage=coverage_ratio(img, cfg),
    )


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def normalize(xs: list[float], epsilon: float = 1e-6) -> list[float]:
    """Sigmoid z-score of each value against the cohort (population variance).

    An all-equal cohort has zero deviation for every member, so the exact
    result is 0.5 everywhere; short-circuiting keeps float drift in the mean
    from leaking into that case.
    """
    if not xs:
        raise ValueError("cannot normalize an empty cohort")
    if min(xs) == max(xs):
        return [0.5] * len(xs)
    n = len(xs)
    mu = sum(xs) / n
    var = sum((x - mu) ** 2 for x in xs) / n
    denom = math.sqrt(var) + epsilon
    return [_sigmoid((x - mu) / denom) for x in xs]


def score_cohort(
    records: list[ComplexityRecord], weights: ScmWeights = ScmWeights()
) -> list[ComplexityRecord]:
    """Fill normalized features and weighted score for the whole cohort."""
    if not records:
        raise ValueError("cannot score an empty cohort")
    cs = normalize([float(r.features.element_count) for r in records], weights.epsilon)
    es = normalize([float(r.features.type_count) for r in records], weights.epsilon)
    vs = normalize([r.features.coverage for r in records], weights.epsilon)
    out = []
    for r, c, e, v in zip(records, cs, es, vs):
        z = weights.alpha * c + weights.beta * e + weights.gamma * v
        out.append(replace(r, normalized=(c, e, v), z=z))
    return out


def _farthest_first_init(values: np.ndarray) -> np.ndarray:
    # Maximin seeding: extreme points, then the point farthest from both.
    lo, hi = values.min(), values.max()
    gaps = np.minimum(np.abs(values - lo), np.abs(values - hi))
    return np.array(sorted((lo, float(values[gaps.argmax()]), hi)))


def _lloyd(values: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    centers = centers.astype(np.float64).copy()
    for _ in range(100):
        # Equidistant points go to the lower-index center (argmin tie rule).
        dist = np.abs(values[:, None] - centers[None, :])
        assign = dist.argmin(axis=1)
        moved = 0.0
        for ci in range(3):
            members = values[assign == ci]
            if members.size == 0:
                continue  # empty cluster keeps its center
            new_center = members.mean()
            moved = max(moved, abs(new_center - centers[ci]))
            centers[ci] = new_center
        if moved < 1e-9:
            break
    assign = np.abs(values[:, None] - centers[None, :]).argmin(axis=1)
    sse = float(((values - centers[assign]) ** 2).sum())
    return centers, assign, sse


def kmeans_tier(
    records: list[ComplexityRecord], seed: int = 0
) -> tuple[list[ComplexityRecord], tuple[float, float, float]]:
    """1-D KMeans (k=3) over scores; ascending centers map to the tier names.

    Lloyd iterations run from two deterministic seedings (score quantiles and
    farthest-first) and the lower-inertia solution wins; a single quantile
    start stalls in a local optimum when tier sizes are skewed. The seed
    plays no role in clustering; it is accepted for interface symmetry with
    :func:`sample_tiers`. Requires at least 3 distinct scores.
    """
    zs = [r.z for r in records]
    if any(z is None for z in zs):
        raise ValueError("records must be scored before tiering")
    if len(set(zs)) < 3:
        raise ValueError("tiering requires at least 3 distinct scores")
    values = np.array(zs, dtype=np.float64)
    candidates = (
        np.percentile(values, [25.0, 50.0, 75.0]),
        _farthest_first_init(values),
    )
    centers, assign, best_sse = None, None, math.inf
    for init in candidates:
        c, a, sse = _lloyd(values, init)
        if sse < best_sse - 1e-12:
            centers, assign, best_sse = c, a, sse
    order = np.argsort(centers, kind="stable")
    rank_of = {int(ci): rank for rank, ci in enumerate(order)}
    tiered = [
        replace(r, tier=TIERS[rank_of[int(a)]]) for r, a in zip(records, assign)
    ]
    sorted_centers = tuple(float(centers[ci]) for ci in order)
    return tiered, sorted_centers


def sample_tiers(
    records: list[ComplexityRecord], n_per_tier: int, seed: int = 0
) -> list[ComplexityRecord]:
    """Seeded uniform sampling without replacement, ``n_per_tier`` per tier."""
    rng = random.Random(seed)
    selection: list[ComplexityRecord] = []
    for tier in TIERS:
        members = sorted(
            (r for r in records if r.tier == tier), key=lambda r: r.id
        )
        if len(members) < n_per_tier:
            raise ValueError(
                f"tier {tier!r} has {len(members)} members, need {n_per_tier}"
            )
        selection.extend(rng.sample(members, n_per_tier))
    return selection
