"""Unit-quaternion helpers.

Quaternions are stored scalar-first as length-4 float arrays ``[w, x, y, z]``.
All functions return new arrays and never mutate their inputs.
"""

from __future__ import annotations

import math

import numpy as np

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = math.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    if n == 0.0:
        raise ValueError("cannot normalize a zero quaternion")
    return q / n


def multiply(a, b) -> np.ndarray:
    """Hamilton product a ⊗ b."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def conjugate(q) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def rotate(q, v) -> np.ndarray:
    """Rotate a 3-vector by the quaternion (q v q*)."""
    w, x, y, z = q
    vx, vy, vz = v
    # t = 2 (q_vec × v)
    tx = 2.0 * (y * vz - z * vy)
    ty = 2.0 * (z * vx - x * vz)
    tz = 2.0 * (x * vy - y * vx)
    # v' = v + w t + q_vec × t
    return np.array(
        [
            vx + w * tx + (y * tz - z * ty),
            vy + w * ty + (z * tx - x * tz),
            vz + w * tz + (x * ty - y * tx),
        ]
    )


def from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n == 0.0:
        raise ValueError("rotation axis must be nonzero")
    half = 0.5 * angle
    s = math.sin(half) / n
    return np.array([math.cos(half), axis[0] * s, axis[1] * s, axis[2] * s])


def from_rpy(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Fixed-axis XYZ convention: R = Rz(yaw) Ry(pitch) Rx(roll)."""
    qx = from_axis_angle((1.0, 0.0, 0.0), roll)
    qy = from_axis_angle((0.0, 1.0, 0.0), pitch)
    qz = from_axis_angle((0.0, 0.0, 1.0), yaw)
    return multiply(qz, multiply(qy, qx))


def to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def error_vector(desired, current) -> np.ndarray:
    """Orientation error as the vector part of desired ⊗ current⁻¹.

    The sign is normalized so the scalar part is ≥ 0, which keeps the error
    on the short way around and equal to axis·sin(θ/2).
    """
    e = multiply(desired, conjugate(current))
    if e[0] < 0.0:
        e = -e
    return e[1:4].copy()


def rotation_angle(a, b) -> float:
    """Angle of the relative rotation between two unit quaternions, in [0, π]."""
    dot = abs(float(np.dot(a, b)))
    return 2.0 * math.acos(min(1.0, dot))


def random_unit(rng: np.random.Generator) -> np.ndarray:
    """Uniformly distributed unit quaternion with scalar part ≥ 0."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    if q[0] < 0.0:
        q = -q
    return q
