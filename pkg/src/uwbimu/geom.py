"""Quaternion and rotation algebra shared by every other module.

Conventions (fixed once, asserted in tests):
  * quaternions are scalar-first numpy arrays [q0, q1, q2, q3], Hamilton product,
  * R(q) maps IMU-frame (body) vectors into the world frame,
  * body angular rate drives the kinematics q_dot = 0.5 * Omega(w) * q.
"""

from __future__ import annotations

import numpy as np

QUAT_NORM_TOL = 1e-6

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


def normalize_quat(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n == 0.0 or not np.isfinite(n):
        raise ValueError("cannot normalize zero or non-finite quaternion")
    return q / n


def _check_unit(q: np.ndarray) -> np.ndarray:
    """Renormalize silently within QUAT_NORM_TOL, reject beyond it."""
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if abs(n - 1.0) > QUAT_NORM_TOL:
        raise ValueError(f"quaternion norm {n!r} deviates from 1 beyond {QUAT_NORM_TOL}")
    return q / n


def rotation_matrix_raw(q) -> np.ndarray:
    """Quaternion-to-DCM formula without any unit check or normalization.

    Quadratic in q; used where differentiation in the 4-dimensional
    ambient quaternion space is intended.
    """
    q0, q1, q2, q3 = q
    return np.array(
        [
            [q0 * q0 + q1 * q1 - q2 * q2 - q3 * q3, 2 * (q1 * q2 - q0 * q3), 2 * (q1 * q3 + q0 * q2)],
            [2 * (q1 * q2 + q0 * q3), q0 * q0 - q1 * q1 + q2 * q2 - q3 * q3, 2 * (q2 * q3 - q0 * q1)],
            [2 * (q1 * q3 - q0 * q2), 2 * (q2 * q3 + q0 * q1), q0 * q0 - q1 * q1 - q2 * q2 + q3 * q3],
        ]
    )


def rotation_matrix(q: np.ndarray) -> np.ndarray:
    """Body-to-world direction cosine matrix of a unit quaternion."""
    return rotation_matrix_raw(_check_unit(q))


def skew(v: np.ndarray) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def omega_matrix(w: np.ndarray) -> np.ndarray:
    """4x4 quaternion-rate matrix: q_dot = 0.5 * omega_matrix(w) @ q."""
    w = np.asarray(w, dtype=float)
    out = np.zeros((4, 4))
    out[0, 1:] = -w
    out[1:, 0] = w
    out[1:, 1:] = -skew(w)
    return out


def xi_matrix(q: np.ndarray) -> np.ndarray:
    """4x3 matrix with 0.5*xi_matrix(q) @ w == 0.5*omega_matrix(w) @ q for all w."""
    q0, q1, q2, q3 = q
    return np.array(
        [
            [-q1, -q2, -q3],
            [q0, -q3, q2],
            [q3, q0, -q1],
            [-q2, q1, q0],
        ]
    )


def quat_multiply(q: np.ndarray, p: np.ndarray) -> np.ndarray:
    q0, q1, q2, q3 = q
    p0, p1, p2, p3 = p
    return np.array(
        [
            q0 * p0 - q1 * p1 - q2 * p2 - q3 * p3,
            q0 * p1 + q1 * p0 + q2 * p3 - q3 * p2,
            q0 * p2 - q1 * p3 + q2 * p0 + q3 * p1,
            q0 * p3 + q1 * p2 - q2 * p1 + q3 * p0,
        ]
    )


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_from_rotvec(theta: np.ndarray) -> np.ndarray:
    """Exponential map: rotation vector (axis * angle) to unit quaternion."""
    theta = np.asarray(theta, dtype=float)
    angle = np.linalg.norm(theta)
    if angle < 1e-12:
        # second-order series keeps the map smooth through zero
        return normalize_quat(np.concatenate(([1.0 - angle * angle / 8.0], 0.5 * theta)))
    axis = theta / angle
    return np.concatenate(([np.cos(angle / 2.0)], np.sin(angle / 2.0) * axis))


def rotvec_from_quat(q: np.ndarray) -> np.ndarray:
    """Logarithm map, shortest rotation (angle in [0, pi])."""
    q = normalize_quat(q)
    if q[0] < 0.0:
        q = -q
    vec_norm = np.linalg.norm(q[1:])
    if vec_norm < 1e-12:
        return 2.0 * q[1:]
    angle = 2.0 * np.arctan2(vec_norm, q[0])
    return angle * q[1:] / vec_norm


def quat_from_matrix(R: np.ndarray) -> np.ndarray:
    """Unit quaternion of a proper rotation matrix (Shepperd's method)."""
    R = np.asarray(R, dtype=float)
    tr = np.trace(R)
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array([0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s])
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(max(R[i, i] - R[j, j] - R[k, k] + 1.0, 0.0)) * 2.0
        q = np.empty(4)
        q[0] = (R[k, j] - R[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (R[j, i] + R[i, j]) / s
        q[1 + k] = (R[k, i] + R[i, k]) / s
    return normalize_quat(q)


def right_jacobian(theta: np.ndarray) -> np.ndarray:
    """Right Jacobian of SO(3): body rate = right_jacobian(theta) @ theta_dot
    for an attitude parameterized as R = exp([theta]x)."""
    theta = np.asarray(theta, dtype=float)
    angle = np.linalg.norm(theta)
    S = skew(theta)
    if angle < 1e-6:
        return np.eye(3) - 0.5 * S + S @ S / 6.0
    a2 = angle * angle
    return (
        np.eye(3)
        - (1.0 - np.cos(angle)) / a2 * S
        + (angle - np.sin(angle)) / (a2 * angle) * (S @ S)
    )


def quat_integrate(q: np.ndarray, w: np.ndarray, dt: float) -> np.ndarray:
    """One Euler step of q_dot = 0.5*Omega(w)*q followed by renormalization."""
    return normalize_quat(q + 0.5 * omega_matrix(w) @ q * dt)


def first_order_rotation_increment(R: np.ndarray, w: np.ndarray, dt: float) -> np.ndarray:
    """R * (I + [w*dt]x), the first-order truncation of R * expm([w*dt]x).

    O(dt^2)-accurate against the exact exponential; the result is not an
    exact rotation matrix.
    """
    if dt < 0:
        raise ValueError("dt must be non-negative")
    return R @ (np.eye(3) + skew(np.asarray(w, dtype=float) * dt))
