"""Quaternion and rotation-matrix arithmetic.

Quaternions are stored scalar-first, ``q = [w, x, y, z]``, as plain numpy
arrays of shape (4,) (or (n, 4) for batches).  A unit quaternion represents
a rotation; raw network-style predictions carry no norm constraint and
their pre-normalization norm doubles as a confidence weight.

All functions are pure and safe to call concurrently.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import EmptyAggregationError

# Below this norm a quaternion is considered degenerate: it normalizes to
# the identity and must be treated as carrying zero weight.
DEGENERATE_NORM = 1e-12

# Unit-norm tolerance for operations that require rotation quaternions.
UNIT_TOL = 1e-6

# Top-eigenvalue gap below which the chordal-mean objective is flat and the
# averaged orientation is flagged as ambiguous.
EIGENGAP_TOL = 1e-12

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def normalize(q):
    """Scale ``q`` to unit norm.

    Returns ``(unit, norm)``.  A degenerate input (norm < 1e-12) maps to the
    identity quaternion with reported norm 0.0; callers must then treat its
    weight as zero.
    """
    q = np.asarray(q, dtype=float)
    n = float(np.linalg.norm(q))
    if n < DEGENERATE_NORM:
        return IDENTITY.copy(), 0.0
    return q / n, n


def normalize_many(quats):
    """Vectorized :func:`normalize` over an (n, 4) array.

    Returns ``(units, norms)`` where degenerate rows become the identity
    quaternion and report norm 0.0.
    """
    quats = np.asarray(quats, dtype=float)
    norms = np.linalg.norm(quats, axis=1)
    degenerate = norms < DEGENERATE_NORM
    safe = np.where(degenerate, 1.0, norms)
    units = quats / safe[:, None]
    if degenerate.any():
        units[degenerate] = IDENTITY
    norms = np.where(degenerate, 0.0, norms)
    return units, norms


def canonical_sign(q):
    """Flip ``q`` so w > 0; if w == 0, the first nonzero component is
    made positive.  Leaves the represented rotation unchanged."""
    q = np.asarray(q, dtype=float)
    for c in q:
        if c > 0.0:
            return q.copy()
        if c < 0.0:
            return -q
    return q.copy()


def to_matrix(q):
    """Rotation matrix of a unit quaternion (row-major 3x3).

    ``to_matrix(q) == to_matrix(-q)``.  Raises ValueError if the input norm
    deviates from 1 by more than 1e-6.
    """
    q = np.asarray(q, dtype=float)
    n = float(np.linalg.norm(q))
    if abs(n - 1.0) > UNIT_TOL:
        raise ValueError(f"to_matrix requires a unit quaternion, got norm {n!r}")
    w, x, y, z = q
    return np.array([
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ])


def from_matrix(R):
    """Unit quaternion of a rotation matrix (Shepperd's method, largest
    pivot), sign-canonicalized."""
    R = np.asarray(R, dtype=float)
    t = R[0, 0] + R[1, 1] + R[2, 2]
    if t > R[0, 0] and t > R[1, 1] and t > R[2, 2]:
        s = math.sqrt(1.0 + t) * 2.0
        q = np.array([0.25 * s,
                      (R[2, 1] - R[1, 2]) / s,
                      (R[0, 2] - R[2, 0]) / s,
                      (R[1, 0] - R[0, 1]) / s])
    elif R[0, 0] >= R[1, 1] and R[0, 0] >= R[2, 2]:
        s = math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        q = np.array([(R[2, 1] - R[1, 2]) / s,
                      0.25 * s,
                      (R[0, 1] + R[1, 0]) / s,
                      (R[0, 2] + R[2, 0]) / s])
    elif R[1, 1] >= R[2, 2]:
        s = math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2.0
        q = np.array([(R[0, 2] - R[2, 0]) / s,
                      (R[0, 1] + R[1, 0]) / s,
                      0.25 * s,
                      (R[1, 2] + R[2, 1]) / s])
    else:
        s = math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2.0
        q = np.array([(R[1, 0] - R[0, 1]) / s,
                      (R[0, 2] + R[2, 0]) / s,
                      (R[1, 2] + R[2, 1]) / s,
                      0.25 * s])
    unit, _ = normalize(q)
    return canonical_sign(unit)


def multiply(q1, q2):
    """Hamilton product q1 * q2 (composition of rotations)."""
    w1, x1, y1, z1 = np.asarray(q1, dtype=float)
    w2, x2, y2, z2 = np.asarray(q2, dtype=float)
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def angular_distance(q1, q2):
    """Geodesic angle between two rotations, in [0, pi].

    ``2 * arccos(min(1, |q1 . q2|))`` -- symmetric and antipodally invariant.
    """
    d = abs(float(np.dot(np.asarray(q1, dtype=float), np.asarray(q2, dtype=float))))
    return 2.0 * math.acos(min(1.0, d))


def eig_sym4(M, off_tol=1e-12, max_sweeps=100):
    """Eigendecomposition of a symmetric 4x4 matrix by cyclic Jacobi sweeps.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues sorted
    descending and eigenvectors as the corresponding columns.

    The matrix is scaled to unit Frobenius norm internally, so the
    ``off_tol`` convergence threshold on the off-diagonal Frobenius norm is
    effectively relative; iteration stops at ``off_tol`` or after
    ``max_sweeps`` sweeps.  Raises ValueError when the input is asymmetric
    beyond 1e-9.
    """
    M = np.asarray(M, dtype=float)
    if M.shape != (4, 4):
        raise ValueError(f"expected a 4x4 matrix, got shape {M.shape}")
    if np.max(np.abs(M - M.T)) > 1e-9:
        raise ValueError("matrix is not symmetric within 1e-9")

    scale = float(np.linalg.norm(M))
    if scale == 0.0:
        return np.zeros(4), np.eye(4)

    A = M / scale
    A = 0.5 * (A + A.T)
    V = np.eye(4)

    for _ in range(max_sweeps):
        off = math.sqrt(float(np.sum(np.square(A - np.diag(np.diag(A))))))
        if off < off_tol:
            break
        for p in range(3):
            for q in range(p + 1, 4):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if abs(theta) > 1e154:
                    t = 1.0 / (2.0 * theta)
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot_p = c * A[:, p] - s * A[:, q]
                rot_q = s * A[:, p] + c * A[:, q]
                A[:, p], A[:, q] = rot_p, rot_q
                rot_p = c * A[p, :] - s * A[q, :]
                rot_q = s * A[p, :] + c * A[q, :]
                A[p, :], A[q, :] = rot_p, rot_q
                A[p, q] = A[q, p] = 0.0
                rot_p = c * V[:, p] - s * V[:, q]
                rot_q = s * V[:, p] + c * V[:, q]
                V[:, p], V[:, q] = rot_p, rot_q

    values = np.diag(A) * scale
    order = np.argsort(values)[::-1]
    return values[order], V[:, order]


def markley_average(quats, weights, with_flag=False):
    """Weighted chordal-mean orientation of a set of quaternions.

    Minimizes ``sum_i w_i * ||R(q) - R(q_i)||_F^2`` over unit quaternions:
    the solution is the top eigenvector of ``M = sum_i w_i q_i q_i^T``.
    Inputs are normalized internally; degenerate (zero-norm) rows are
    demoted to weight 0.  The result is sign-canonicalized and invariant
    under per-input sign flips and global weight scaling.

    With ``with_flag=True`` returns ``(quaternion, ambiguous)`` where
    ``ambiguous`` signals a top-eigenvalue tie (gap < 1e-12 after weight
    normalization): the objective is flat and any maximizer is returned.

    Raises EmptyAggregationError when no positive weight remains.
    """
    quats = np.atleast_2d(np.asarray(quats, dtype=float))
    weights = np.atleast_1d(np.asarray(weights, dtype=float))
    if quats.shape[0] != weights.shape[0]:
        raise ValueError(
            f"{quats.shape[0]} quaternions but {weights.shape[0]} weights")
    if (weights < 0.0).any():
        raise ValueError("weights must be nonnegative")

    units, norms = normalize_many(quats)
    w = np.where(norms == 0.0, 0.0, weights)
    total = float(w.sum())
    if total <= 0.0:
        raise EmptyAggregationError("no quaternion with positive weight to average")
    w = w / total  # scale invariance + O(1) matrix entries

    M = (units * w[:, None]).T @ units
    values, vectors = eig_sym4(M)
    q = canonical_sign(vectors[:, 0])
    q /= np.linalg.norm(q)
    if with_flag:
        return q, bool(values[0] - values[1] < EIGENGAP_TOL)
    return q
