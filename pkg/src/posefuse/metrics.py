"""ADD / ADD-S distances, accuracy-threshold curves, and AUC summaries.

The symmetry-blind distance averages per-point displacement between the
estimated and ground-truth transforms; the symmetry-robust variant takes
the nearest transformed point instead.  Accuracy at a threshold is the
fraction of samples below it; the area under that curve up to ``tau_max``
(default 0.1 m) is reported in percent.  Missed detections enter as
infinite distances and contribute zero accuracy everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from . import quat

DEFAULT_TAU_MAX = 0.1  # meters


@dataclass
class Pose:
    """A rigid pose: unit rotation quaternion plus translation in meters."""
    quaternion: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        self.quaternion = np.asarray(self.quaternion, dtype=float)
        self.translation = np.asarray(self.translation, dtype=float)
        if self.quaternion.shape != (4,):
            raise ValueError(f"quaternion must be shape (4,), got {self.quaternion.shape}")
        if self.translation.shape != (3,):
            raise ValueError(f"translation must be shape (3,), got {self.translation.shape}")

    def transform(self, points):
        """Apply the pose to (m, 3) points."""
        return points @ quat.to_matrix(self.quaternion).T + self.translation


def add_distance(est, gt, model):
    """Mean distance between correspondingly transformed model points."""
    diff = est.transform(model.points) - gt.transform(model.points)
    return float(np.mean(np.linalg.norm(diff, axis=1)))


def adds_distance(est, gt, model):
    """Mean distance to the *nearest* transformed model point; never
    exceeds :func:`add_distance`."""
    d = cdist(est.transform(model.points), gt.transform(model.points))
    return float(np.mean(d.min(axis=1)))


def rotation_only_distance(est, gt, model, variant="P"):
    """ADD ("P") or ADD-S ("S") with both translations removed."""
    zero = np.zeros(3)
    est0 = Pose(est.quaternion, zero)
    gt0 = Pose(gt.quaternion, zero)
    if variant == "P":
        return add_distance(est0, gt0, model)
    if variant == "S":
        return adds_distance(est0, gt0, model)
    raise ValueError(f"variant must be 'P' or 'S', got {variant!r}")


def translation_error(est, gt):
    """Euclidean distance between the two translations."""
    return float(np.linalg.norm(est.translation - gt.translation))


def auc(distances, tau_max=DEFAULT_TAU_MAX):
    """Exact area under the accuracy-vs-threshold curve, in percent.

    ``accuracy(tau)`` is the fraction of distances strictly below ``tau``;
    the integral over [0, tau_max] of the empirical step function reduces
    to ``sum_i max(0, tau_max - d_i) / (n * tau_max)``.  Infinite distances
    (missed detections) contribute zero everywhere.
    """
    d = np.asarray(list(distances), dtype=float)
    if d.size == 0:
        raise ValueError("auc of an empty distance list is undefined")
    if np.isnan(d).any():
        raise ValueError("distances must not be NaN")
    if (d < 0.0).any():
        raise ValueError("distances must be nonnegative")
    if tau_max <= 0.0:
        raise ValueError(f"tau_max must be positive, got {tau_max}")
    return float(np.sum(np.clip(tau_max - d, 0.0, None)) / (d.size * tau_max) * 100.0)


def accuracy_curve(distances, thresholds):
    """Fraction of distances strictly below each threshold."""
    d = np.asarray(list(distances), dtype=float)
    t = np.asarray(thresholds, dtype=float)
    return (d[None, :] < t[:, None]).mean(axis=1)


@dataclass
class SampleResult:
    """Distances of one (frame, object) pair; infinities mark a miss."""
    frame_id: str
    class_id: int
    add: float
    adds: float
    rot_p: float
    rot_s: float
    trans_err: float

    @property
    def detected(self):
        return np.isfinite(self.add)


@dataclass
class EvalReport:
    """Per-sample distances plus the pooled and class-wise AUC summaries.

    ``auc_p`` / ``auc_s`` pool all samples; the ``*_classwise`` variants
    average per-class AUCs over all classes; ``nonsymc`` / ``symc`` average
    AUC P over the non-symmetric classes and AUC S over the symmetric ones.
    ``mean_translation_error`` covers detected objects only (``n_missed``
    counts the rest).
    """
    samples: list
    tau_max: float
    auc_p: float
    auc_s: float
    auc_rot_p: float
    auc_rot_s: float
    auc_p_classwise: float
    auc_s_classwise: float
    nonsymc: float | None
    symc: float | None
    mean_translation_error: float | None
    n_missed: int
    per_class: dict
    curve_thresholds: np.ndarray
    curve_add: np.ndarray
    curve_adds: np.ndarray


def per_class_auc(samples, tau_max=DEFAULT_TAU_MAX):
    """Per-class pooled AUCs: {class_id: {"auc_p", "auc_s", "auc_rot_p",
    "auc_rot_s", "n"}}."""
    out = {}
    for class_id in sorted({s.class_id for s in samples}):
        group = [s for s in samples if s.class_id == class_id]
        out[class_id] = {
            "auc_p": auc([s.add for s in group], tau_max),
            "auc_s": auc([s.adds for s in group], tau_max),
            "auc_rot_p": auc([s.rot_p for s in group], tau_max),
            "auc_rot_s": auc([s.rot_s for s in group], tau_max),
            "n": len(group),
        }
    return out


def classwise_summary(per_class, models):
    """Unweighted class means: AUC P over non-symmetric classes and AUC S
    over symmetric classes.  Either side is None when no class qualifies."""
    symmetric = {m.class_id: m.symmetric for m in models}
    nonsym = [v["auc_p"] for c, v in per_class.items() if not symmetric.get(c, False)]
    sym = [v["auc_s"] for c, v in per_class.items() if symmetric.get(c, False)]
    nonsymc = float(np.mean(nonsym)) if nonsym else None
    symc = float(np.mean(sym)) if sym else None
    return nonsymc, symc


def evaluate(estimates, ground_truths, models, tau_max=DEFAULT_TAU_MAX,
             curve_points=101):
    """Score estimated poses against ground truth.

    ``estimates`` and ``ground_truths`` map ``(frame_id, class_id)`` to
    :class:`Pose`; ``models`` is the list of :class:`ObjectModel`.  Every
    ground-truth object is scored; one without a matching estimate counts
    as missed (infinite distances).  Estimates without ground truth are
    ignored.
    """
    by_class = {m.class_id: m for m in models}
    samples = []
    for (frame_id, class_id) in sorted(ground_truths):
        gt = ground_truths[(frame_id, class_id)]
        if class_id not in by_class:
            raise ValueError(f"no object model for class {class_id}")
        model = by_class[class_id]
        est = estimates.get((frame_id, class_id))
        if est is None:
            samples.append(SampleResult(frame_id, class_id, np.inf, np.inf,
                                        np.inf, np.inf, np.inf))
            continue
        samples.append(SampleResult(
            frame_id, class_id,
            add=add_distance(est, gt, model),
            adds=adds_distance(est, gt, model),
            rot_p=rotation_only_distance(est, gt, model, "P"),
            rot_s=rotation_only_distance(est, gt, model, "S"),
            trans_err=translation_error(est, gt),
        ))
    if not samples:
        raise ValueError("no ground-truth objects to evaluate")

    adds = [s.add for s in samples]
    addss = [s.adds for s in samples]
    per_class = per_class_auc(samples, tau_max)
    nonsymc, symc = classwise_summary(per_class, models)
    detected = [s.trans_err for s in samples if s.detected]
    thresholds = np.linspace(0.0, tau_max, curve_points)
    return EvalReport(
        samples=samples,
        tau_max=tau_max,
        auc_p=auc(adds, tau_max),
        auc_s=auc(addss, tau_max),
        auc_rot_p=auc([s.rot_p for s in samples], tau_max),
        auc_rot_s=auc([s.rot_s for s in samples], tau_max),
        auc_p_classwise=float(np.mean([v["auc_p"] for v in per_class.values()])),
        auc_s_classwise=float(np.mean([v["auc_s"] for v in per_class.values()])),
        nonsymc=nonsymc,
        symc=symc,
        mean_translation_error=float(np.mean(detected)) if detected else None,
        n_missed=sum(1 for s in samples if not s.detected),
        per_class=per_class,
        curve_thresholds=thresholds,
        curve_add=accuracy_curve(adds, thresholds),
        curve_adds=accuracy_curve(addss, thresholds),
    )
