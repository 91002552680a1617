"""Independent reference implementations used to check the package.

Written without importing the code under test, from textbook formulas, so
agreement between the two is evidence rather than tautology.
"""
from __future__ import annotations

import math

import numpy as np


def skew(a):
    x, y, z = a
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rot_axis_angle(axis, theta):
    """Rodrigues in matrix form: I + sin(t) K + (1 - cos(t)) K^2."""
    a = np.asarray(axis, dtype=float)
    K = skew(a / np.linalg.norm(a))
    return np.eye(3) + math.sin(theta) * K + (1.0 - math.cos(theta)) * K @ K


def homogeneous(R=None, p=(0.0, 0.0, 0.0)):
    T = np.eye(4)
    if R is not None:
        T[:3, :3] = R
    T[:3, 3] = p
    return T


def quat_to_matrix(w, x, y, z):
    n = math.sqrt(w * w + x * x + y * y + z * z)
    w, x, y, z = w / n, x / n, y / n, z / n
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def fk_homogeneous(base_T, joints, tool, theta):
    """Tool transform as a plain product of 4x4 matrices.

    ``joints`` is a list of (axis, offset) pairs; each joint first
    translates by its offset, then rotates about its axis.
    """
    T = np.array(base_T, dtype=float)
    for (axis, offset), th in zip(joints, theta):
        T = T @ homogeneous(p=offset) @ homogeneous(rot_axis_angle(axis, th))
    return T @ homogeneous(p=tool)


def rotation_angle_deg(Ra, Rb):
    """Angle of the relative rotation Ra^T Rb from its trace."""
    c = (np.trace(Ra.T @ Rb) - 1.0) / 2.0
    return math.degrees(math.acos(max(-1.0, min(1.0, c))))


def smoothstep_reference(u):
    return 3 * u**2 - 2 * u**3


def pinhole(p, fx=600.0, fy=600.0, cx=320.0, cy=240.0):
    return fx * p[0] / p[2] + cx, fy * p[1] / p[2] + cy


def point_segment_distance(p, a, b):
    p, a, b = (np.asarray(v, dtype=float) for v in (p, a, b))
    ab = b - a
    t = np.clip(np.dot(p - a, ab) / np.dot(ab, ab), 0.0, 1.0)
    return float(np.linalg.norm(p - a - t * ab))
