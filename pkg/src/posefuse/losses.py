"""Reference orientation losses with analytic gradients.

Point-matching loss (symmetry-blind), shape-matching loss (nearest
transformed point, symmetry-robust), the symmetric/non-symmetric dispatch
between them, the antipodally symmetric log dot-product loss, a masked
pixel-wise L2, and the weighted combination rule.  Gradients are provided
for the point-matching and log losses; the shape-matching min makes its
subgradient ambiguous at ties, so finite differences are the documented
validation path there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from . import quat

# Training pipelines in this lineage scale metric depth by 100 to bring the
# depth error into the same range as the center-direction error.  Recorded
# for external consumers; nothing in this package trains, so it is unused.
DEPTH_LOSS_SCALE = 100.0

DEFAULT_QLOSS_EPS = 1e-4


@dataclass
class ObjectModel:
    """A 3D point model with its symmetry flag."""
    class_id: int
    points: np.ndarray
    symmetric: bool = False
    name: str = ""

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if self.points.shape[0] < 1 or self.points.shape[1] != 3:
            raise ValueError(f"model points must be (m, 3) with m >= 1, got {self.points.shape}")
        if not np.isfinite(self.points).all():
            raise ValueError("model points must be finite")

    @property
    def num_points(self):
        return self.points.shape[0]


@dataclass(frozen=True)
class CombinedLossWeights:
    """Coefficients of the segmentation/translation/rotation combination."""
    alpha_seg: float = 1.0
    alpha_trans: float = 1.0
    alpha_rot: float = 1.0

    def __post_init__(self):
        if self.alpha_seg < 0 or self.alpha_trans < 0 or self.alpha_rot < 0:
            raise ValueError("loss weights must be nonnegative")

    @classmethod
    def for_shape_match(cls):
        """The published setting when training with the shape-match loss."""
        return cls(alpha_seg=1.0, alpha_trans=1.0, alpha_rot=100.0)


def ploss(q_est, q_gt, model):
    """Mean squared distance between correspondingly rotated model points.

    ``(1/2m) sum_x ||R(q_est) x - R(q_gt) x||^2`` -- zero iff the rotations
    agree (for full-rank point sets), symmetry-blind.
    """
    diff = model.points @ (quat.to_matrix(q_est) - quat.to_matrix(q_gt)).T
    return float(0.5 * np.mean(np.sum(diff * diff, axis=1)))


def sloss(q_est, q_gt, model):
    """Mean squared distance to the *nearest* rotated model point.

    ``(1/2m) sum_x1 min_x2 ||R(q_est) x1 - R(q_gt) x2||^2`` via the full
    O(m^2) distance table; never exceeds :func:`ploss` on the same inputs
    and vanishes for shape-equivalent rotations of symmetric objects.
    """
    est_pts = model.points @ quat.to_matrix(q_est).T
    gt_pts = model.points @ quat.to_matrix(q_gt).T
    d2 = cdist(est_pts, gt_pts, "sqeuclidean")
    return float(0.5 * np.mean(d2.min(axis=1)))


def smloss(q_est, q_gt, model):
    """:func:`sloss` for symmetric models, :func:`ploss` otherwise."""
    return sloss(q_est, q_gt, model) if model.symmetric else ploss(q_est, q_gt, model)


def qloss(q_avg, q_gt, eps=DEFAULT_QLOSS_EPS):
    """``log(eps + 1 - |q_avg . q_gt|)``; antipodally symmetric in both
    arguments.  ``eps`` keeps the perfect-match value finite."""
    if eps <= 0.0:
        raise ValueError(f"eps must be positive, got {eps}")
    d = abs(float(np.dot(np.asarray(q_avg, dtype=float), np.asarray(q_gt, dtype=float))))
    return math.log(eps + 1.0 - min(d, 1.0))


def l2_pixel_loss(pred, gt_by_class, labels):
    """Masked pixel-wise squared error against each object's orientation.

    ``pred`` is the (H, W, 4) raw prediction map, ``gt_by_class`` maps class
    id to its unit ground-truth quaternion, and ``labels`` is the
    ground-truth segmentation (0 = background).  Each pixel's target is
    sign-aligned to the prediction so antipodal predictions cost nothing.
    """
    labels = np.asarray(labels)
    mask = labels > 0
    if not mask.any():
        raise ValueError("empty ground-truth mask")
    total = 0.0
    count = 0
    for class_id in np.unique(labels[mask]):
        class_id = int(class_id)
        if class_id not in gt_by_class:
            raise ValueError(f"no ground-truth quaternion for class {class_id}")
        q_gt = np.asarray(gt_by_class[class_id], dtype=float)
        p = pred[labels == class_id].astype(float)
        sign = np.where(p @ q_gt < 0.0, -1.0, 1.0)
        diff = p - sign[:, None] * q_gt
        total += float(np.sum(diff * diff))
        count += p.shape[0]
    return total / count


def _dloss_dunit(u, q_gt, model):
    # Ambient gradient of ploss w.r.t. the unit quaternion's components,
    # using R(q) x = x + 2w (v x x) + 2 v x (v x x).
    w, v = float(u[0]), np.asarray(u[1:], dtype=float)
    pts = model.points
    err = pts @ (quat.to_matrix(u) - quat.to_matrix(q_gt)).T  # (m, 3)
    cross_vp = np.cross(np.broadcast_to(v, pts.shape), pts)   # v x x per point
    gw = 2.0 * float(np.sum(cross_vp * err)) / model.num_points
    cross_pe = np.cross(pts, err)                             # x x e per point
    vdotp = pts @ v
    vdote = err @ v
    pdote = np.sum(pts * err, axis=1)
    gv = 2.0 * (w * cross_pe.sum(axis=0)
                + vdotp @ err
                + vdote @ pts
                - 2.0 * float(pdote.sum()) * v) / model.num_points
    return np.concatenate([[gw], gv])


def grad_ploss(q_est, q_gt, model):
    """Analytic gradient of ``ploss(normalize(q_est), q_gt)`` w.r.t. the raw
    4-vector ``q_est``, i.e. including the normalization map.  At a unit
    input this is the ambient gradient projected onto the sphere's tangent
    space."""
    r = np.asarray(q_est, dtype=float)
    u, n = quat.normalize(r)
    if n == 0.0:
        raise ValueError("cannot differentiate through a zero-norm quaternion")
    g = _dloss_dunit(u, q_gt, model)
    return (g - u * float(u @ g)) / n


def grad_qloss(q_avg, q_gt, eps=DEFAULT_QLOSS_EPS):
    """Analytic gradient of :func:`qloss` w.r.t. ``q_avg`` (no normalization
    map; the loss is defined on the raw dot product).  At the kink
    ``q_avg . q_gt == 0`` the +1 sign branch is reported."""
    if eps <= 0.0:
        raise ValueError(f"eps must be positive, got {eps}")
    q_avg = np.asarray(q_avg, dtype=float)
    q_gt = np.asarray(q_gt, dtype=float)
    d = float(q_avg @ q_gt)
    sign = -1.0 if d < 0.0 else 1.0
    return -sign * q_gt / (eps + 1.0 - abs(d))


def combined_loss(l_seg, l_trans, l_rot, weights):
    """Weighted sum of the three branch losses."""
    return (weights.alpha_seg * l_seg
            + weights.alpha_trans * l_trans
            + weights.alpha_rot * l_rot)
