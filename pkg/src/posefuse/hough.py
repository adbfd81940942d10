"""Hough-voting recovery of object centers, inlier masks, and translations.

Every foreground pixel predicts a unit 2D direction toward its object's
center and the center's depth.  Voting marches each pixel's ray across a
per-class accumulator grid (one cell per pixel); the peak cell, refined to
sub-pixel, is the object center.  Translation is back-projected from the
center and the mean inlier depth.

Image coordinates are (u, v) = (column, row); pixel (u, v) sits at integer
grid position (u, v).  Voting runs on the CPU (optionally numba-compiled).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a normal dependency
    njit = None

DEFAULT_INLIER_ANGLE = 0.3  # radians
DEFAULT_MIN_PIXELS = 50


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixels."""
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    def project(self, xyz):
        """Project camera-frame points (..., 3) with z > 0 to (u, v)."""
        xyz = np.asarray(xyz, dtype=float)
        z = xyz[..., 2]
        return np.stack([self.fx * xyz[..., 0] / z + self.cx,
                         self.fy * xyz[..., 1] / z + self.cy], axis=-1)


@dataclass
class DenseMaps:
    """Per-pixel dense predictions of one frame.

    quat: (H, W, 4) raw quaternions (scalar-first, possibly non-unit).
    direction: (H, W, 2) unit (du, dv) toward the object center.
    depth: (H, W) object-center depth in meters.
    scores: (H, W, C+1) class probabilities, channel 0 = background.
    """
    quat: np.ndarray
    direction: np.ndarray
    depth: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        self.quat = np.asarray(self.quat)
        self.direction = np.asarray(self.direction)
        self.depth = np.asarray(self.depth)
        if self.depth.ndim == 3 and self.depth.shape[2] == 1:
            self.depth = self.depth[:, :, 0]
        self.scores = np.asarray(self.scores)
        h, w = self.quat.shape[:2]
        for name, arr, channels in (("quat", self.quat, 4),
                                    ("direction", self.direction, 2),
                                    ("scores", self.scores, None)):
            if arr.shape[:2] != (h, w):
                raise ValueError(f"{name} shape {arr.shape} does not match ({h}, {w})")
            if channels is not None and arr.shape[2] != channels:
                raise ValueError(f"{name} must have {channels} channels, got {arr.shape[2]}")
        if self.depth.shape != (h, w):
            raise ValueError(f"depth shape {self.depth.shape} does not match ({h}, {w})")

    @property
    def height(self):
        return self.quat.shape[0]

    @property
    def width(self):
        return self.quat.shape[1]

    @property
    def num_classes(self):
        """Foreground class count (score channels minus background)."""
        return self.scores.shape[2] - 1

    @cached_property
    def labels(self):
        """(H, W) argmax class ids derived from the score maps."""
        return np.argmax(self.scores, axis=2)

    def validate(self):
        """Check the numeric invariants on foreground pixels."""
        fg = self.labels > 0
        sums = self.scores.sum(axis=2)
        if not np.allclose(sums, 1.0, atol=1e-4):
            raise ValueError("score maps must sum to 1 per pixel within 1e-4")
        if fg.any():
            norms = np.linalg.norm(self.direction[fg].astype(float), axis=1)
            if not np.allclose(norms, 1.0, atol=1e-3):
                raise ValueError("direction vectors must be unit-norm on foreground")
            if not (self.depth[fg] > 0).all():
                raise ValueError("depth must be positive on foreground")


@dataclass
class ObjectDetection:
    """One detected object: center, depth, metric translation, support."""
    class_id: int
    center: tuple
    depth: float
    translation: np.ndarray
    inlier_mask: np.ndarray
    bbox: tuple
    vote_score: float


def _cast_votes_py(acc, us, vs, dus, dvs, height, width):
    # March each ray in unit steps, voting once per visited cell; cells
    # cannot be revisited because both coordinates advance monotonically.
    for i in range(us.shape[0]):
        x = us[i]
        y = vs[i]
        du = dus[i]
        dv = dvs[i]
        n = math.sqrt(du * du + dv * dv)
        if n < 1e-9:
            cu = int(round(x))
            cv = int(round(y))
            if 0 <= cu < width and 0 <= cv < height:
                acc[cv, cu] += 1.0
            continue
        du /= n
        dv /= n
        last_u = -1
        last_v = -1
        while True:
            cu = int(round(x))
            cv = int(round(y))
            if cu < 0 or cu >= width or cv < 0 or cv >= height:
                break
            if cu != last_u or cv != last_v:
                acc[cv, cu] += 1.0
                last_u = cu
                last_v = cv
            x += du
            y += dv


if njit is not None:
    _cast_votes = njit(cache=True, nogil=True)(_cast_votes_py)
else:  # pragma: no cover
    _cast_votes = _cast_votes_py


def hough_vote(dense, class_id):
    """Vote the class's pixels into an accumulator and locate the peak.

    Returns ``(accumulator, center, vote_score)``.  The center is the
    argmax cell (ties: smallest (v, u)) refined by the vote-weighted
    centroid of its 3x3 neighborhood; ``center`` is None and the score 0.0
    when no pixel carries the class (object absent).
    """
    height, width = dense.height, dense.width
    acc = np.zeros((height, width))
    mask = dense.labels == class_id
    if not mask.any():
        return acc, None, 0.0
    vs, us = np.nonzero(mask)
    dirs = dense.direction[vs, us].astype(float)
    _cast_votes(acc, us.astype(float), vs.astype(float),
                np.ascontiguousarray(dirs[:, 0]), np.ascontiguousarray(dirs[:, 1]),
                height, width)

    flat = int(np.argmax(acc))  # first max in row-major order = smallest (v, u)
    v0, u0 = divmod(flat, width)
    score = float(acc[v0, u0])

    u_lo, u_hi = max(0, u0 - 1), min(width, u0 + 2)
    v_lo, v_hi = max(0, v0 - 1), min(height, v0 + 2)
    patch = acc[v_lo:v_hi, u_lo:u_hi]
    vv, uu = np.mgrid[v_lo:v_hi, u_lo:u_hi]
    total = float(patch.sum())
    center = (float((uu * patch).sum() / total), float((vv * patch).sum() / total))
    return acc, center, score


def compute_inliers(dense, class_id, center, inlier_angle=DEFAULT_INLIER_ANGLE):
    """Pixels of the class whose direction points at ``center``.

    A pixel is an inlier iff the angle between its predicted direction and
    the vector to the center is below ``inlier_angle``; pixels closer than
    0.5 px to the center are inliers unconditionally.  Returns an (H, W)
    boolean mask.
    """
    mask = dense.labels == class_id
    out = np.zeros_like(mask)
    if not mask.any():
        return out
    vs, us = np.nonzero(mask)
    to_center = np.stack([center[0] - us, center[1] - vs], axis=1)
    dist = np.linalg.norm(to_center, axis=1)
    dirs = dense.direction[vs, us].astype(float)
    dir_norm = np.linalg.norm(dirs, axis=1)
    denom = np.maximum(dist * dir_norm, 1e-30)
    cosang = np.clip((to_center * dirs).sum(axis=1) / denom, -1.0, 1.0)
    ok = (dist < 0.5) | (np.arccos(cosang) < inlier_angle)
    out[vs[ok], us[ok]] = True
    return out


def refine_center_rays(pixels_uv, directions, fallback):
    """Least-squares intersection point of the inlier rays.

    Each ray runs from its pixel along the predicted direction; the normal
    equations of the summed perpendicular ray distances give a 2x2 system.
    Falls back to the voted center when the system is near-singular (e.g.
    all rays parallel).
    """
    d = np.asarray(directions, dtype=float)
    norms = np.linalg.norm(d, axis=1)
    ok = norms > 1e-9
    if not ok.any():
        return fallback
    d = d[ok] / norms[ok, None]
    p = np.asarray(pixels_uv, dtype=float)[ok]
    n = d.shape[0]
    sxx = float((d[:, 0] * d[:, 0]).sum())
    sxy = float((d[:, 0] * d[:, 1]).sum())
    syy = float((d[:, 1] * d[:, 1]).sum())
    A = np.array([[n - sxx, -sxy], [-sxy, n - syy]])
    proj = (p * d).sum(axis=1)
    b = (p - proj[:, None] * d).sum(axis=0)
    if abs(np.linalg.det(A)) < 1e-9 * max(n, 1):
        return fallback
    x = np.linalg.solve(A, b)
    return (float(x[0]), float(x[1]))


def recover_translation(center, depth, intrinsics):
    """Back-project a sub-pixel center and center depth to a 3D translation."""
    if depth <= 0.0:
        raise ValueError(f"depth must be positive, got {depth}")
    u, v = center
    return np.array([depth * (u - intrinsics.cx) / intrinsics.fx,
                     depth * (v - intrinsics.cy) / intrinsics.fy,
                     depth])


def detect_objects(dense, intrinsics, inlier_angle=DEFAULT_INLIER_ANGLE,
                   min_pixels=DEFAULT_MIN_PIXELS, depth_mode="mean"):
    """Detect every class with enough support and recover its translation.

    For each class with at least ``min_pixels`` labeled pixels: vote,
    select inliers around the voted center, refine the center on the inlier
    rays, aggregate the inlier depths (mean, or median with
    ``depth_mode="median"``), and back-project.  Classes below the pixel
    threshold are skipped.  Detections are returned sorted by class id.
    """
    if depth_mode not in ("mean", "median"):
        raise ValueError(f"depth_mode must be 'mean' or 'median', got {depth_mode!r}")
    labels = dense.labels
    detections = []
    for class_id in range(1, dense.scores.shape[2]):
        mask = labels == class_id
        if int(mask.sum()) < min_pixels:
            continue
        _, center, score = hough_vote(dense, class_id)
        if center is None:
            continue
        inliers = compute_inliers(dense, class_id, center, inlier_angle)
        if not inliers.any():
            inliers = mask  # degenerate vote; fall back to the full class
        vs, us = np.nonzero(inliers)
        refined = refine_center_rays(
            np.stack([us, vs], axis=1),
            dense.direction[vs, us].astype(float),
            fallback=center,
        )
        depths = dense.depth[inliers].astype(float)
        depth = float(np.median(depths)) if depth_mode == "median" else float(depths.mean())
        detections.append(ObjectDetection(
            class_id=class_id,
            center=refined,
            depth=depth,
            translation=recover_translation(refined, depth, intrinsics),
            inlier_mask=inliers,
            bbox=(int(us.min()), int(vs.min()), int(us.max()), int(vs.max())),
            vote_score=score,
        ))
    return detections
