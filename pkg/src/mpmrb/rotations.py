"""Quaternion helpers for rigid body orientation.

Quaternions are stored as (w, x, y, z) float64 arrays and kept unit-norm.
"""

from __future__ import annotations

import numpy as np


def quat_identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(q)
    if n == 0.0 or not np.isfinite(n):
        raise ValueError("cannot normalize a zero or non-finite quaternion")
    return q / n


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n == 0.0:
        return quat_identity()
    half = 0.5 * angle
    return np.concatenate(([np.cos(half)], np.sin(half) * axis / n))


def quat_exp_increment(q: np.ndarray, omega: np.ndarray, dt: float) -> np.ndarray:
    """Rotate q by the exponential map of omega * dt (world-frame omega)."""
    theta = np.linalg.norm(omega) * dt
    if theta == 0.0:
        return q.copy()
    dq = quat_from_axis_angle(omega, theta)
    return quat_normalize(quat_multiply(dq, q))


def quat_slerp(a: np.ndarray, b: np.ndarray, t: float) -> np.ndarray:
    dot = float(np.dot(a, b))
    if dot < 0.0:
        b = -b
        dot = -dot
    if dot > 1.0 - 1e-12:
        return quat_normalize(a + t * (b - a))
    theta = np.arccos(np.clip(dot, -1.0, 1.0))
    s = np.sin(theta)
    return (np.sin((1.0 - t) * theta) * a + np.sin(t * theta) * b) / s


def quat_log_angular_velocity(q0: np.ndarray, q1: np.ndarray, dt: float) -> np.ndarray:
    """World-frame angular velocity carrying q0 to q1 over dt."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    dq = quat_multiply(q1, np.array([q0[0], -q0[1], -q0[2], -q0[3]]))
    if dq[0] < 0.0:
        dq = -dq
    v = dq[1:]
    s = np.linalg.norm(v)
    if s < 1e-15:
        return np.zeros(3)
    angle = 2.0 * np.arctan2(s, dq[0])
    return (angle / dt) * (v / s)
