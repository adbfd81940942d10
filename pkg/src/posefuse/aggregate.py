"""Aggregation of dense per-pixel quaternion predictions into one orientation.

A frame's per-object predictions arrive as a :class:`WeightedQuatSet` (raw
quaternions plus per-pixel confidence weights).  The strategies here reduce
that set to a single unit quaternion: plain or weighted chordal averaging,
confidence pruning, picking the single most confident prediction, or
(weighted) RANSAC clustering under the angular distance.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import quat
from .errors import EmptyAggregationError


class Strategy(enum.Enum):
    NAIVE_AVERAGE = "naive"
    MARKLEY_AVERAGE = "average"
    PRUNED = "pruned"
    RANSAC = "ransac"
    WEIGHTED_RANSAC = "wransac"
    MOST_CONFIDENT = "topk1"


class WeightSource(enum.Enum):
    UNIT = "unit"
    NORM = "norm"
    SEGMENTATION_SCORE = "segm"


@dataclass(frozen=True)
class AggregationConfig:
    """Strategy selection plus the knobs the strategies consume.

    ``prune_fraction`` is the discarded fraction of least-confident
    predictions (0 <= lambda < 1), ``ransac_threshold`` the inlier angular
    distance in radians, ``ransac_iterations`` the number of hypothesis
    draws.  ``seed`` makes RANSAC deterministic within this implementation.
    """
    strategy: Strategy = Strategy.MARKLEY_AVERAGE
    weight_source: WeightSource = WeightSource.NORM
    prune_fraction: float = 0.0
    ransac_threshold: float = 0.2
    ransac_iterations: int = 50
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.prune_fraction < 1.0:
            raise ValueError(f"prune_fraction must be in [0, 1), got {self.prune_fraction}")
        if self.ransac_threshold <= 0.0:
            raise ValueError(f"ransac_threshold must be > 0, got {self.ransac_threshold}")
        if self.ransac_iterations < 1:
            raise ValueError(f"ransac_iterations must be >= 1, got {self.ransac_iterations}")


@dataclass
class WeightedQuatSet:
    """Raw quaternions (n, 4) with nonnegative weights (n,)."""
    quats: np.ndarray
    weights: np.ndarray
    source: WeightSource = WeightSource.UNIT

    def __post_init__(self):
        self.quats = np.atleast_2d(np.asarray(self.quats, dtype=float))
        self.weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if self.quats.shape[0] != self.weights.shape[0]:
            raise ValueError(
                f"{self.quats.shape[0]} quaternions but {self.weights.shape[0]} weights")
        if self.quats.shape[1] != 4:
            raise ValueError(f"quaternions must be (n, 4), got {self.quats.shape}")
        if (self.weights < 0.0).any():
            raise ValueError("weights must be nonnegative")

    def __len__(self):
        return self.quats.shape[0]


@dataclass
class AggregatedOrientation:
    """One object's fused orientation with provenance."""
    quaternion: np.ndarray
    support: float
    used_count: int
    ambiguous: bool = False
    strategy: Strategy | None = None


def naive_average(qset, align_signs=True):
    """Normalized component-wise sum of the raw quaternions, weights ignored.

    With ``align_signs=True`` (default) inputs are first flipped into the
    hemisphere of the largest-norm input, which makes the result invariant
    to per-input sign flips.  ``align_signs=False`` sums the predictions
    exactly as given, so an antipodal pair cancels.

    Raises EmptyAggregationError when the summed norm falls below 1e-12.
    """
    quats = qset.quats
    if align_signs:
        norms = np.linalg.norm(quats, axis=1)
        ref = quats[int(np.argmax(norms))]
        flip = np.where(quats @ ref < 0.0, -1.0, 1.0)
        quats = quats * flip[:, None]
    total = quats.sum(axis=0)
    norm = float(np.linalg.norm(total))
    if norm < quat.DEGENERATE_NORM:
        raise EmptyAggregationError("quaternion sum cancels to zero norm")
    q = quat.canonical_sign(total / norm)
    return AggregatedOrientation(
        quaternion=q,
        support=float(qset.weights.sum()),
        used_count=len(qset),
        strategy=Strategy.NAIVE_AVERAGE,
    )


def markley(qset):
    """Weighted chordal mean of the set (see :func:`quat.markley_average`)."""
    q, ambiguous = quat.markley_average(qset.quats, qset.weights, with_flag=True)
    _, norms = quat.normalize_many(qset.quats)
    used = np.where(norms == 0.0, 0.0, qset.weights)
    return AggregatedOrientation(
        quaternion=q,
        support=float(used.sum()),
        used_count=int((used > 0.0).sum()),
        ambiguous=ambiguous,
        strategy=Strategy.MARKLEY_AVERAGE,
    )


def _survivor_count(n, prune_fraction):
    # guard against fp noise in (1 - lambda) * n pushing the ceiling up
    return max(1, math.ceil((1.0 - prune_fraction) * n - 1e-12))


def prune_and_average(qset, prune_fraction):
    """Discard the least-confident fraction, then average what remains.

    Predictions are stable-sorted by weight descending (ties keep input
    order); the ``ceil((1 - lambda) * n)`` most confident survive and are
    fused by the weighted chordal mean.  ``lambda = 0`` therefore reproduces
    :func:`markley`, and a single survivor reproduces :func:`most_confident`.
    """
    if not 0.0 <= prune_fraction < 1.0:
        raise ValueError(f"prune_fraction must be in [0, 1), got {prune_fraction}")
    n = len(qset)
    if n == 0:
        raise EmptyAggregationError("empty quaternion set")
    order = np.argsort(-qset.weights, kind="stable")
    keep = order[:_survivor_count(n, prune_fraction)]
    result = markley(WeightedQuatSet(qset.quats[keep], qset.weights[keep], qset.source))
    result.strategy = Strategy.PRUNED
    return result


def most_confident(qset):
    """The single highest-weight prediction, normalized (ties: first)."""
    if len(qset) == 0:
        raise EmptyAggregationError("empty quaternion set")
    i = int(np.argmax(qset.weights))
    unit, norm = quat.normalize(qset.quats[i])
    if norm == 0.0:
        raise EmptyAggregationError("most confident prediction has zero norm")
    return AggregatedOrientation(
        quaternion=quat.canonical_sign(unit),
        support=float(qset.weights[i]),
        used_count=1,
        strategy=Strategy.MOST_CONFIDENT,
    )


def ransac_cluster(qset, cfg):
    """RANSAC clustering under the angular distance.

    Runs exactly ``cfg.ransac_iterations`` hypothesis draws from the seeded
    generator.  The unweighted variant draws uniformly and scores a
    hypothesis by its inlier count; the weighted variant
    (``Strategy.WEIGHTED_RANSAC``) draws proportionally to weight via
    inverse transform over the cumulative weight array and scores by inlier
    weight sum.  The winning hypothesis quaternion itself is returned (no
    inlier refit); score ties go to the earliest iteration.
    """
    n = len(qset)
    if n == 0:
        raise EmptyAggregationError("empty quaternion set")
    weighted = cfg.strategy is Strategy.WEIGHTED_RANSAC
    units, _ = quat.normalize_many(qset.quats)

    if weighted:
        draw_w = qset.weights
        if not (draw_w > 0.0).any():
            raise EmptyAggregationError("all weights zero in weighted RANSAC")
        score_w = qset.weights
    else:
        draw_w = np.ones(n)
        score_w = np.ones(n)

    # inverse-CDF sampling; zero-weight entries are never drawn because
    # side="right" skips flat segments of the cumulative sum
    cum = np.cumsum(draw_w)
    total = cum[-1]
    rng = np.random.default_rng(cfg.seed)
    picks = np.searchsorted(cum, rng.random(cfg.ransac_iterations) * total, side="right")
    picks = np.minimum(picks, n - 1)

    # d(q, h) < t  <=>  |q . h| > cos(t/2), with d in [0, pi]
    cos_half_t = math.cos(min(cfg.ransac_threshold, math.pi) / 2.0)

    best_score = -1.0
    best_i = -1
    best_count = 0
    for i in picks:
        inliers = np.abs(units @ units[i]) > cos_half_t
        score = float(score_w[inliers].sum())
        if score > best_score:
            best_score = score
            best_i = int(i)
            best_count = int(inliers.sum())

    return AggregatedOrientation(
        quaternion=quat.canonical_sign(units[best_i]),
        support=best_score,
        used_count=best_count,
        strategy=cfg.strategy if weighted else Strategy.RANSAC,
    )


def aggregate(qset, cfg):
    """Dispatch the configured strategy on a weighted quaternion set."""
    if cfg.strategy is Strategy.NAIVE_AVERAGE:
        return naive_average(qset)
    if cfg.strategy is Strategy.MARKLEY_AVERAGE:
        return markley(qset)
    if cfg.strategy is Strategy.PRUNED:
        return prune_and_average(qset, cfg.prune_fraction)
    if cfg.strategy is Strategy.MOST_CONFIDENT:
        return most_confident(qset)
    if cfg.strategy in (Strategy.RANSAC, Strategy.WEIGHTED_RANSAC):
        return ransac_cluster(qset, cfg)
    raise ValueError(f"unknown strategy {cfg.strategy!r}")


def select_weights(dense, mask, source, class_id=None):
    """Gather the raw quaternions under ``mask`` with per-pixel weights.

    ``mask`` is an (H, W) boolean array.  Weights are 1 for UNIT, the
    pre-normalization quaternion norm for NORM, and the object's class
    probability for SEGMENTATION_SCORE (``class_id`` required then).
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (dense.height, dense.width):
        raise ValueError(f"mask shape {mask.shape} does not match maps "
                         f"({dense.height}, {dense.width})")
    if not mask.any():
        raise EmptyAggregationError("empty pixel mask")
    quats = dense.quat[mask].astype(float)
    if source is WeightSource.UNIT:
        weights = np.ones(quats.shape[0])
    elif source is WeightSource.NORM:
        weights = np.linalg.norm(quats, axis=1)
    elif source is WeightSource.SEGMENTATION_SCORE:
        if class_id is None:
            raise ValueError("class_id is required for segmentation-score weights")
        if not 0 <= class_id < dense.scores.shape[2]:
            raise ValueError(f"class_id {class_id} out of range for "
                             f"{dense.scores.shape[2]} score channels")
        weights = dense.scores[mask][:, class_id].astype(float)
    else:
        raise ValueError(f"unknown weight source {source!r}")
    return WeightedQuatSet(quats, weights, source)
