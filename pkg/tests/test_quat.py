import math

import numpy as np
import pytest

from posefuse import quat
from posefuse.errors import EmptyAggregationError

from conftest import precise_angular, random_unit_quat, random_unit_quats


def rot_z(angle):
    return np.array([math.cos(angle / 2), 0.0, 0.0, math.sin(angle / 2)])


def chordal_objective(q, quats, weights):
    """Independent evaluation of the weighted chordal objective."""
    R = quat.to_matrix(q)
    total = 0.0
    for qi, wi in zip(quats, weights):
        unit, n = quat.normalize(qi)
        if n == 0.0:
            continue
        total += wi * np.sum((R - quat.to_matrix(unit)) ** 2)
    return total


class TestNormalize:
    def test_pure_scaling(self):
        unit, norm = quat.normalize([0, 0, 0, 2])
        assert np.allclose(unit, [0, 0, 0, 1])
        assert norm == 2.0

    def test_identity(self):
        unit, norm = quat.normalize([1, 0, 0, 0])
        assert np.allclose(unit, [1, 0, 0, 0])
        assert norm == 1.0

    def test_degenerate_maps_to_identity_with_zero_norm(self):
        unit, norm = quat.normalize([1e-15, 0, 0, 0])
        assert np.allclose(unit, [1, 0, 0, 0])
        assert norm == 0.0

    def test_batch_matches_scalar(self, rng):
        quats = rng.normal(size=(50, 4)) * rng.uniform(0, 2, (50, 1))
        quats[7] = 0.0
        units, norms = quat.normalize_many(quats)
        for i in range(50):
            u, n = quat.normalize(quats[i])
            assert np.allclose(units[i], u, rtol=0, atol=1e-15)
            assert np.isclose(norms[i], n, rtol=1e-15, atol=0)


class TestToMatrix:
    def test_identity(self):
        assert np.array_equal(quat.to_matrix([1, 0, 0, 0]), np.eye(3))

    def test_180_about_z(self):
        assert np.allclose(quat.to_matrix([0, 0, 0, 1]), np.diag([-1, -1, 1]))

    def test_orthonormal_and_proper(self, rng):
        for _ in range(100):
            R = quat.to_matrix(random_unit_quat(rng))
            assert np.allclose(R.T @ R, np.eye(3), atol=1e-12)
            assert np.isclose(np.linalg.det(R), 1.0, atol=1e-12)

    def test_antipodal_pair_maps_identically(self, rng):
        q = random_unit_quat(rng)
        assert np.allclose(quat.to_matrix(q), quat.to_matrix(-q))

    def test_rejects_non_unit(self):
        with pytest.raises(ValueError):
            quat.to_matrix([1.0, 0.0, 0.0, 0.01])

    def test_from_matrix_round_trip(self, rng):
        for _ in range(200):
            q = random_unit_quat(rng)
            back = quat.from_matrix(quat.to_matrix(q))
            assert precise_angular(q, back) < 1e-9


class TestAngularDistance:
    # the arccos form cannot resolve angles below ~6e-8: |q.q| may round a
    # couple of ulps under 1 for a unit q, so "zero" means zero at that
    # resolution (precise_angular resolves further when a test needs it)
    def test_self_distance_zero(self, rng):
        for _ in range(100):
            q = random_unit_quat(rng)
            assert quat.angular_distance(q, q) < 1e-7
            assert precise_angular(q, q) == 0.0

    def test_antipodal_distance_zero(self, rng):
        for _ in range(100):
            q = random_unit_quat(rng)
            assert quat.angular_distance(q, -q) < 1e-7
            assert precise_angular(q, -q) == 0.0

    def test_quarter_turn(self):
        assert np.isclose(quat.angular_distance([1, 0, 0, 0], rot_z(math.pi / 2)),
                          math.pi / 2)

    def test_symmetric(self, rng):
        a, b = random_unit_quats(rng, 2)
        assert quat.angular_distance(a, b) == quat.angular_distance(b, a)

    def test_triangle_inequality(self, rng):
        for _ in range(500):
            a, b, c = random_unit_quats(rng, 3)
            ab = quat.angular_distance(a, b)
            bc = quat.angular_distance(b, c)
            ac = quat.angular_distance(a, c)
            assert ac <= ab + bc + 1e-9


class TestEigSym4:
    def test_diagonal(self):
        values, vectors = quat.eig_sym4(np.diag([1.0, 2.0, 3.0, 4.0]))
        assert np.allclose(values, [4, 3, 2, 1])
        # eigenvectors are the axes, in eigenvalue order
        assert np.allclose(np.abs(vectors), np.eye(4)[:, ::-1], atol=1e-12)

    def test_rank_one_projector(self, rng):
        q = random_unit_quat(rng)
        values, vectors = quat.eig_sym4(np.outer(q, q))
        assert np.allclose(values, [1, 0, 0, 0], atol=1e-12)
        assert min(np.linalg.norm(vectors[:, 0] - q),
                   np.linalg.norm(vectors[:, 0] + q)) < 1e-9

    def test_random_reconstruction(self, rng):
        for _ in range(100):
            A = rng.normal(size=(4, 4)) * rng.uniform(1e-3, 1e3)
            M = A + A.T
            values, vectors = quat.eig_sym4(M)
            recon = vectors @ np.diag(values) @ vectors.T
            assert np.linalg.norm(recon - M) < 1e-9 * np.linalg.norm(M)
            assert np.allclose(vectors.T @ vectors, np.eye(4), atol=1e-9)

    def test_rejects_asymmetric(self):
        M = np.eye(4)
        M[0, 1] = 1e-6
        with pytest.raises(ValueError):
            quat.eig_sym4(M)

    def test_rejects_wrong_shape(self):
        with pytest.raises(ValueError):
            quat.eig_sym4(np.eye(3))


class TestMarkleyAverage:
    def test_copies_of_one_quaternion(self, rng):
        q = random_unit_quat(rng)
        quats = np.tile(q, (5, 1))
        avg = quat.markley_average(quats, rng.uniform(0.1, 2.0, 5))
        assert quat.angular_distance(avg, q) < 1e-9

    def test_antipodal_pair_is_rotation_equivalent(self, rng):
        q = random_unit_quat(rng)
        avg = quat.markley_average(np.stack([q, -q]), [1.0, 1.0])
        assert quat.angular_distance(avg, q) < 1e-9

    def test_bisects_identity_and_quarter_turn(self):
        # oracle: brute-force the chordal objective on a fine grid of
        # z-rotations plus random restarts
        quats = np.stack([rot_z(0.0), rot_z(math.pi / 2)])
        weights = [1.0, 1.0]
        grid = np.linspace(0.0, 2.0 * math.pi, 20001)
        values = [chordal_objective(rot_z(a), quats, weights) for a in grid]
        best = rot_z(grid[int(np.argmin(values))])
        restart_rng = np.random.default_rng(7)
        for cand in random_unit_quats(restart_rng, 500):
            assert chordal_objective(cand, quats, weights) >= min(values) - 1e-9
        avg = quat.markley_average(quats, weights)
        assert quat.angular_distance(avg, best) < 1e-3  # grid resolution
        assert quat.angular_distance(avg, rot_z(math.pi / 4)) < 1e-6

    def test_objective_not_beaten_by_candidates(self, rng):
        for _ in range(20):
            n = rng.integers(2, 15)
            quats = random_unit_quats(rng, n) * rng.uniform(0.2, 2.0, (n, 1))
            weights = rng.uniform(0.0, 1.0, n)
            weights[0] = 1.0
            avg = quat.markley_average(quats, weights)
            f_avg = chordal_objective(avg, quats, weights)
            for cand in quats:
                unit = cand / np.linalg.norm(cand)
                assert f_avg <= chordal_objective(unit, quats, weights) + 1e-9
            for cand in random_unit_quats(rng, 200):
                assert f_avg <= chordal_objective(cand, quats, weights) + 1e-9

    def test_invariances(self, rng):
        n = 12
        quats = random_unit_quats(rng, n) * rng.uniform(0.2, 2.0, (n, 1))
        weights = rng.uniform(0.1, 1.0, n)
        base = quat.markley_average(quats, weights)

        perm = rng.permutation(n)
        assert precise_angular(
            base, quat.markley_average(quats[perm], weights[perm])) < 1e-9

        flips = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        assert precise_angular(
            base, quat.markley_average(quats * flips[:, None], weights)) < 1e-9

        assert precise_angular(
            base, quat.markley_average(quats, weights * 37.5)) < 1e-9

    def test_zero_norm_rows_are_demoted(self, rng):
        q = random_unit_quat(rng)
        quats = np.stack([q, np.zeros(4)])
        avg = quat.markley_average(quats, [1.0, 100.0])
        assert quat.angular_distance(avg, q) < 1e-9

    def test_all_zero_weights_error(self, rng):
        with pytest.raises(EmptyAggregationError):
            quat.markley_average(random_unit_quats(rng, 3), [0.0, 0.0, 0.0])
        with pytest.raises(EmptyAggregationError):
            quat.markley_average(np.zeros((3, 4)), [1.0, 1.0, 1.0])

    def test_ambiguity_flag_on_flat_objective(self):
        # two orthogonal rotations with equal weight: the top eigenvalue
        # is degenerate and the mean is genuinely ambiguous
        quats = np.stack([np.array([1.0, 0, 0, 0]), np.array([0.0, 0, 0, 1.0])])
        _, ambiguous = quat.markley_average(quats, [1.0, 1.0], with_flag=True)
        assert ambiguous
        _, ambiguous = quat.markley_average(quats, [1.0, 0.5], with_flag=True)
        assert not ambiguous

    def test_sign_canonicalized(self, rng):
        avg = quat.markley_average(random_unit_quats(rng, 6), np.ones(6))
        assert avg[0] >= 0.0
