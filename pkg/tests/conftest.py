"""Shared fixtures: random quaternions, object models, synthetic scenes."""

import numpy as np
import pytest

from posefuse import CameraIntrinsics, ObjectModel, Pose
from posefuse.io import SceneGroundTruth

IMG_W, IMG_H = 160, 120
INTRINSICS = CameraIntrinsics(fx=130.0, fy=130.0, cx=80.0, cy=60.0)


def precise_angular(q1, q2):
    """Angular distance via the half-chord, numerically resolvable below
    the ~2e-8 floor of the arccos formulation (same mathematical value)."""
    q1 = np.asarray(q1, float) / np.linalg.norm(q1)
    q2 = np.asarray(q2, float) / np.linalg.norm(q2)
    chord = min(np.linalg.norm(q1 - q2), np.linalg.norm(q1 + q2))
    return 4.0 * np.arcsin(min(1.0, chord / 2.0))


def random_unit_quat(rng):
    q = rng.normal(size=4)
    return q / np.linalg.norm(q)


def random_unit_quats(rng, n):
    q = rng.normal(size=(n, 4))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def make_models(rng, class_ids=(1, 2, 3), n_points=250, scale=0.05, symmetric=()):
    """Blob-shaped point models, ~`scale` meters across."""
    models = []
    for cid in class_ids:
        pts = rng.uniform(-scale, scale, size=(n_points, 3))
        models.append(ObjectModel(class_id=cid, points=pts,
                                  symmetric=cid in symmetric, name=f"obj{cid}"))
    return models


def make_scene_gt(rng, models, frame_id="frame0"):
    """Ground truth with every object placed well inside the frame."""
    anchors = [(50.0, 45.0), (110.0, 45.0), (80.0, 85.0), (40.0, 90.0), (120.0, 90.0)]
    objects = []
    for i, model in enumerate(models):
        u, v = anchors[i % len(anchors)]
        u += rng.uniform(-6, 6)
        v += rng.uniform(-6, 6)
        z = rng.uniform(0.8, 1.3)
        t = np.array([(u - INTRINSICS.cx) / INTRINSICS.fx * z,
                      (v - INTRINSICS.cy) / INTRINSICS.fy * z,
                      z])
        objects.append((model.class_id, Pose(random_unit_quat(rng), t)))
    return SceneGroundTruth(frame_id=frame_id, objects=objects, intrinsics=INTRINSICS)


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
