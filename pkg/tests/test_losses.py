import math

import numpy as np
import pytest

from posefuse import losses, quat
from posefuse.losses import (CombinedLossWeights, ObjectModel, combined_loss,
                             grad_ploss, grad_qloss, l2_pixel_loss, ploss,
                             qloss, sloss, smloss)

from conftest import random_unit_quat, random_unit_quats


def rot_z(angle):
    return np.array([math.cos(angle / 2), 0.0, 0.0, math.sin(angle / 2)])


def random_model(rng, m=100, symmetric=False):
    return ObjectModel(class_id=1, points=rng.uniform(-0.5, 0.5, (m, 3)),
                       symmetric=symmetric, name="blob")


SQUARE = ObjectModel(class_id=2, symmetric=True, name="square", points=np.array([
    [0.5, 0.5, 0.0], [-0.5, 0.5, 0.0], [-0.5, -0.5, 0.0], [0.5, -0.5, 0.0]]))


def ploss_oracle(q_est, q_gt, model):
    R_est, R_gt = quat.to_matrix(q_est), quat.to_matrix(q_gt)
    total = 0.0
    for x in model.points:
        d = R_est @ x - R_gt @ x
        total += float(d @ d)
    return total / (2 * model.num_points)


def sloss_oracle(q_est, q_gt, model):
    R_est, R_gt = quat.to_matrix(q_est), quat.to_matrix(q_gt)
    total = 0.0
    for x1 in model.points:
        best = min(float(np.sum((R_est @ x1 - R_gt @ x2) ** 2))
                   for x2 in model.points)
        total += best
    return total / (2 * model.num_points)


def fd_grad(f, x, h=1e-6):
    g = np.zeros(x.size)
    for k in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[k] += h
        xm[k] -= h
        g[k] = (f(xp) - f(xm)) / (2 * h)
    return g


class TestPloss:
    def test_zero_at_equal(self, rng):
        q = random_unit_quat(rng)
        assert ploss(q, q, random_model(rng)) < 1e-30

    def test_hand_forced_half_turn(self):
        model = ObjectModel(class_id=1, points=[[1.0, 0.0, 0.0]], name="pt")
        assert np.isclose(ploss(rot_z(math.pi), [1, 0, 0, 0], model), 2.0)

    def test_matches_per_point_oracle(self, rng):
        for _ in range(20):
            q1, q2 = random_unit_quats(rng, 2)
            model = random_model(rng)
            assert np.isclose(ploss(q1, q2, model), ploss_oracle(q1, q2, model),
                              rtol=0, atol=1e-9)

    def test_left_invariance(self, rng):
        q1, q2, r = random_unit_quats(rng, 3)
        model = random_model(rng)
        assert np.isclose(ploss(quat.multiply(r, q1), quat.multiply(r, q2), model),
                          ploss(q1, q2, model), atol=1e-12)

    def test_sign_flip_invariance(self, rng):
        q1, q2 = random_unit_quats(rng, 2)
        model = random_model(rng)
        base = ploss(q1, q2, model)
        assert np.isclose(ploss(-q1, q2, model), base, atol=1e-14)
        assert np.isclose(ploss(q1, -q2, model), base, atol=1e-14)


class TestSloss:
    def test_zero_at_equal(self, rng):
        q = random_unit_quat(rng)
        assert sloss(q, q, random_model(rng)) < 1e-30

    def test_square_quarter_turn_is_free(self):
        # a 90-degree turn maps the square onto itself
        assert sloss(rot_z(math.pi / 2), [1, 0, 0, 0], SQUARE) < 1e-12

    def test_square_eighth_turn_value(self):
        # 45 degrees: each rotated corner is equidistant from two original
        # corners; nearest-corner sum gives a^2 (2 - sqrt(2)) with a = 0.5
        got = sloss(rot_z(math.pi / 4), [1, 0, 0, 0], SQUARE)
        assert np.isclose(got, sloss_oracle(rot_z(math.pi / 4), [1, 0, 0, 0], SQUARE),
                          atol=1e-12)
        assert np.isclose(got, 0.25 * (2.0 - math.sqrt(2.0)), atol=1e-12)

    def test_never_exceeds_ploss(self, rng):
        for _ in range(50):
            q1, q2 = random_unit_quats(rng, 2)
            model = random_model(rng, m=40)
            assert sloss(q1, q2, model) <= ploss(q1, q2, model) + 1e-12

    def test_matches_oracle_random(self, rng):
        q1, q2 = random_unit_quats(rng, 2)
        model = random_model(rng, m=30)
        assert np.isclose(sloss(q1, q2, model), sloss_oracle(q1, q2, model),
                          rtol=0, atol=1e-12)

    def test_sign_flip_invariance(self, rng):
        q1, q2 = random_unit_quats(rng, 2)
        model = random_model(rng, m=30)
        assert np.isclose(sloss(-q1, -q2, model), sloss(q1, q2, model), atol=1e-14)


class TestSmloss:
    def test_dispatch(self, rng):
        q1, q2 = random_unit_quats(rng, 2)
        sym = random_model(rng, symmetric=True)
        plain = ObjectModel(class_id=sym.class_id, points=sym.points.copy(),
                            symmetric=False, name=sym.name)
        assert smloss(q1, q2, sym) == sloss(q1, q2, sym)
        assert smloss(q1, q2, plain) == ploss(q1, q2, plain)
        # toggling the flag moves the value by exactly ploss - sloss
        delta = smloss(q1, q2, plain) - smloss(q1, q2, sym)
        assert np.isclose(delta, ploss(q1, q2, plain) - sloss(q1, q2, plain),
                          atol=1e-14)


class TestQloss:
    # exactly representable unit quaternions: the |q.q| = 1 premise holds
    # bit for bit, so the log(eps) identity can be checked at 1e-12
    EXACT_UNITS = [
        np.array([1.0, 0.0, 0.0, 0.0]),
        np.array([0.0, 0.0, 1.0, 0.0]),
        np.array([0.5, 0.5, 0.5, 0.5]),
        np.array([0.6, -0.8, 0.0, 0.0]),
        np.array([0.0, 0.6, 0.0, 0.8]),
    ]

    def test_perfect_match_value(self, rng):
        for q in self.EXACT_UNITS:
            assert abs(qloss(q, q, 1e-4) - math.log(1e-4)) < 1e-12
        # a float-normalized quaternion dots to 1 +- a couple of ulps,
        # which perturbs the loss at the ~1e-11 level
        q = random_unit_quat(rng)
        assert abs(qloss(q, q, 1e-4) - math.log(1e-4)) < 1e-10

    def test_antipodal_same_value(self, rng):
        q1, q2 = random_unit_quats(rng, 2)
        assert qloss(-q1, q2) == qloss(q1, q2)
        assert qloss(q1, -q2) == qloss(q1, q2)

    def test_orthogonal_value(self):
        q1 = np.array([1.0, 0, 0, 0])
        q2 = np.array([0.0, 1.0, 0, 0])
        assert np.isclose(qloss(q1, q2, 1e-4), math.log(1.0001))
        assert np.isclose(qloss(q1, q2, 1e-4), 9.9995e-5, rtol=1e-4)

    def test_rejects_bad_eps(self, rng):
        q = random_unit_quat(rng)
        with pytest.raises(ValueError):
            qloss(q, q, 0.0)
        with pytest.raises(ValueError):
            qloss(q, q, -1e-3)


class TestL2PixelLoss:
    def make_scene(self, rng, h=6, w=9):
        labels = np.zeros((h, w), dtype=int)
        labels[1:4, 2:6] = 1
        labels[4:6, 6:9] = 2
        gt = {1: random_unit_quat(rng), 2: random_unit_quat(rng)}
        return labels, gt

    def test_exact_predictions_cost_nothing(self, rng):
        labels, gt = self.make_scene(rng)
        pred = np.zeros(labels.shape + (4,))
        for c, q in gt.items():
            pred[labels == c] = q
        assert l2_pixel_loss(pred, gt, labels) < 1e-30

    def test_antipodal_predictions_cost_nothing(self, rng):
        labels, gt = self.make_scene(rng)
        pred = np.zeros(labels.shape + (4,))
        for c, q in gt.items():
            pred[labels == c] = -q
        assert l2_pixel_loss(pred, gt, labels) < 1e-30

    def test_matches_per_pixel_oracle(self, rng):
        labels, gt = self.make_scene(rng)
        pred = rng.normal(size=labels.shape + (4,))
        total, count = 0.0, 0
        for v in range(labels.shape[0]):
            for u in range(labels.shape[1]):
                c = labels[v, u]
                if c == 0:
                    continue
                q = gt[c] if pred[v, u] @ gt[c] >= 0 else -gt[c]
                total += float(np.sum((pred[v, u] - q) ** 2))
                count += 1
        assert np.isclose(l2_pixel_loss(pred, gt, labels), total / count,
                          rtol=0, atol=1e-9)

    def test_empty_mask_errors(self, rng):
        with pytest.raises(ValueError):
            l2_pixel_loss(np.zeros((3, 3, 4)), {}, np.zeros((3, 3), dtype=int))


class TestGradPloss:
    def test_zero_at_minimum(self, rng):
        q = random_unit_quat(rng)
        g = grad_ploss(q, q, random_model(rng))
        assert np.linalg.norm(g) < 1e-8

    def test_matches_central_differences(self, rng):
        for _ in range(50):
            q_est, q_gt = random_unit_quats(rng, 2)
            model = random_model(rng, m=60)

            def f(r):
                unit, _ = quat.normalize(r)
                return ploss(unit, q_gt, model)

            analytic = grad_ploss(q_est, q_gt, model)
            numeric = fd_grad(f, q_est.copy())
            rel = np.abs(analytic - numeric) / np.maximum(np.abs(numeric), 1e-7)
            assert rel.max() < 1e-4

    def test_gradient_through_scaling(self, rng):
        # the gradient is defined through the normalization map, so the
        # tangential direction is unchanged under input scaling
        q_est, q_gt = random_unit_quats(rng, 2)
        model = random_model(rng, m=30)
        g1 = grad_ploss(q_est, q_gt, model)
        g2 = grad_ploss(q_est * 2.0, q_gt, model)
        assert np.allclose(g1, 2.0 * g2, atol=1e-12)


class TestGradQloss:
    def test_matches_central_differences(self, rng):
        for _ in range(100):
            q_avg, q_gt = random_unit_quats(rng, 2)
            analytic = grad_qloss(q_avg, q_gt, 1e-4)
            numeric = fd_grad(lambda r: qloss(r, q_gt, 1e-4), q_avg.copy())
            rel = np.abs(analytic - numeric) / np.maximum(np.abs(numeric), 1e-7)
            assert rel.max() < 1e-4

    def test_kink_magnitude(self, rng):
        # at q_avg . q_gt == 0 the reported (+ branch) gradient points along
        # -q_gt with magnitude 1/(1+eps); the one-sided slope confirms it
        eps = 1e-4
        q_gt = np.array([1.0, 0.0, 0.0, 0.0])
        q_avg = np.array([0.0, 1.0, 0.0, 0.0])
        g = grad_qloss(q_avg, q_gt, eps)
        assert np.isclose(np.linalg.norm(g), 1.0 / (1.0 + eps))
        assert np.allclose(g, -q_gt / (1.0 + eps))
        h = 1e-8
        one_sided = (qloss(q_avg + h * q_gt, q_gt, eps) - qloss(q_avg, q_gt, eps)) / h
        assert np.isclose(one_sided, -1.0 / (1.0 + eps), rtol=1e-4)


class TestCombinedLoss:
    def test_published_shape_match_weights(self):
        assert combined_loss(1.0, 1.0, 1.0, CombinedLossWeights.for_shape_match()) == 102.0

    def test_zero(self):
        assert combined_loss(0.0, 0.0, 0.0, CombinedLossWeights()) == 0.0

    def test_plain_sum(self):
        assert combined_loss(2.0, 3.0, 5.0, CombinedLossWeights()) == 10.0

    def test_rejects_negative_weights(self):
        with pytest.raises(ValueError):
            CombinedLossWeights(alpha_rot=-1.0)


class TestObjectModel:
    def test_requires_points(self):
        with pytest.raises(ValueError):
            ObjectModel(class_id=1, points=np.zeros((0, 3)))

    def test_requires_finite(self):
        with pytest.raises(ValueError):
            ObjectModel(class_id=1, points=[[np.nan, 0, 0]])
