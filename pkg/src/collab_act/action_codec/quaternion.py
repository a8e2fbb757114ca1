"""Unit quaternion helpers, (w, x, y, z) order, broadcasting over leading axes."""
from __future__ import annotations

import numpy as np

SMALL_ANGLE = 1e-6


def normalize(q):
    q = np.asarray(q, dtype=np.float64)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def canonical(q):
    """Normalize and pick the sign with w >= 0."""
    q = normalize(q)
    return np.where(q[..., :1] < 0, -q, q)


def conj(q):
    q = np.asarray(q, dtype=np.float64)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def mul(a, b):
    """Hamilton product a * b."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def exp_map(rotvec):
    """Rotation vector (axis * angle) to unit quaternion."""
    v = np.asarray(rotvec, dtype=np.float64)
    theta = np.linalg.norm(v, axis=-1, keepdims=True)
    small = theta < SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    t2 = theta * theta
    # sin(theta/2)/theta and cos(theta/2), 4th-order series below SMALL_ANGLE
    k = np.where(small, 0.5 - t2 / 48.0 + t2 * t2 / 3840.0, np.sin(safe / 2) / safe)
    w = np.where(small, 1.0 - t2 / 8.0 + t2 * t2 / 384.0, np.cos(safe / 2))
    return np.concatenate([w, k * v], axis=-1)


def log_map(q):
    """Unit quaternion to rotation vector with norm <= pi (shortest rotation)."""
    q = canonical(q)
    w = q[..., :1]
    xyz = q[..., 1:]
    s = np.linalg.norm(xyz, axis=-1, keepdims=True)
    theta = 2.0 * np.arctan2(s, w)
    small = s < 1e-12
    w_small = np.where(small, w, 1.0)  # a small xyz implies w close to 1
    factor = np.where(small, 2.0 / w_small * (1.0 - s * s / (3.0 * w_small * w_small)), theta / np.where(small, 1.0, s))
    return factor * xyz


def axis_of(q):
    """Unit rotation axis xyz / sqrt(1 - w^2); zero for the identity."""
    q = canonical(q)
    s = np.sqrt(np.clip(1.0 - q[..., :1] ** 2, 0.0, None))
    return np.where(s < 1e-12, 0.0, q[..., 1:] / np.where(s < 1e-12, 1.0, s))


def geodesic(a, b):
    """Rotation angle between two unit quaternions, in radians."""
    d = mul(conj(normalize(a)), normalize(b))
    return 2.0 * np.arctan2(np.linalg.norm(d[..., 1:], axis=-1), np.abs(d[..., 0]))


def from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis, axis=-1, keepdims=True)
    angle = np.asarray(angle, dtype=np.float64)[..., None]
    return np.concatenate([np.cos(angle / 2), np.sin(angle / 2) * axis], axis=-1)


def random_unit(rng, size=None):
    shape = (4,) if size is None else (size, 4)
    return canonical(rng.normal(size=shape))
