"""Rigid-body poses: unit quaternions (w, x, y, z) plus translations in meters.

Quaternions are normalized on construction, so every ``Quat`` that exists is
a valid rotation.  Distances treat ``q`` and ``-q`` as the same rotation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

_SMALL_ANGLE = 1e-12


@dataclass(frozen=True)
class Quat:
    w: float = 1.0
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    def __post_init__(self):
        n = math.sqrt(self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z)
        if not math.isfinite(n) or n == 0.0:
            raise ValueError(f"cannot normalize quaternion {self.as_tuple()}")
        if n != 1.0:
            object.__setattr__(self, "w", self.w / n)
            object.__setattr__(self, "x", self.x / n)
            object.__setattr__(self, "y", self.y / n)
            object.__setattr__(self, "z", self.z / n)

    @classmethod
    def from_array(cls, a: Sequence[float]) -> "Quat":
        return cls(float(a[0]), float(a[1]), float(a[2]), float(a[3]))

    @classmethod
    def from_axis_angle(cls, axis: Sequence[float], angle: float) -> "Quat":
        ax = np.asarray(axis, dtype=float)
        n = np.linalg.norm(ax)
        if n == 0.0:
            return cls()
        ax = ax / n
        s = math.sin(angle / 2.0)
        return cls(math.cos(angle / 2.0), ax[0] * s, ax[1] * s, ax[2] * s)

    @classmethod
    def from_rotvec(cls, rv: Sequence[float]) -> "Quat":
        rv = np.asarray(rv, dtype=float)
        angle = float(np.linalg.norm(rv))
        if angle < _SMALL_ANGLE:
            # first-order expansion keeps tiny rotations exact
            return cls(1.0, rv[0] / 2.0, rv[1] / 2.0, rv[2] / 2.0)
        return cls.from_axis_angle(rv / angle, angle)

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "Quat":
        """Shepperd's method; picks the largest diagonal term for stability."""
        m = np.asarray(m, dtype=float)
        tr = m[0, 0] + m[1, 1] + m[2, 2]
        if tr > 0:
            s = math.sqrt(tr + 1.0) * 2.0
            return cls(0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s)
        if m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
            s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
            return cls((m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s)
        if m[1, 1] > m[2, 2]:
            s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
            return cls((m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s)
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        return cls((m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.w, self.x, self.y, self.z)

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])

    def conj(self) -> "Quat":
        return Quat(self.w, -self.x, -self.y, -self.z)

    def __mul__(self, other: "Quat") -> "Quat":
        aw, ax, ay, az = self.w, self.x, self.y, self.z
        bw, bx, by, bz = other.w, other.x, other.y, other.z
        return Quat(
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        )

    def rotate(self, v: Sequence[float]) -> np.ndarray:
        return self.matrix() @ np.asarray(v, dtype=float)

    def matrix(self) -> np.ndarray:
        w, x, y, z = self.w, self.x, self.y, self.z
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )

    def rotvec(self) -> np.ndarray:
        """Axis-angle vector with angle in [0, pi]."""
        w, v = self.w, np.array([self.x, self.y, self.z])
        if w < 0:
            w, v = -w, -v
        s = float(np.linalg.norm(v))
        if s < _SMALL_ANGLE:
            return 2.0 * v
        angle = 2.0 * math.atan2(s, w)
        return v * (angle / s)


IDENTITY_QUAT = Quat()


@dataclass(frozen=True)
class Pose:
    position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    orientation: Quat = IDENTITY_QUAT

    def __post_init__(self):
        p = tuple(float(c) for c in self.position)
        if len(p) != 3 or not all(math.isfinite(c) for c in p):
            raise ValueError(f"pose position must be 3 finite numbers, got {self.position!r}")
        object.__setattr__(self, "position", p)

    @property
    def p(self) -> np.ndarray:
        return np.array(self.position)

    @classmethod
    def from_matrix(cls, T: np.ndarray) -> "Pose":
        return cls(tuple(T[:3, 3]), Quat.from_matrix(T[:3, :3]))

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.orientation.matrix()
        T[:3, 3] = self.position
        return T

    def transform_point(self, pt: Sequence[float]) -> np.ndarray:
        return self.orientation.rotate(pt) + self.p

    def translated(self, d: Sequence[float]) -> "Pose":
        return Pose(tuple(self.p + np.asarray(d, dtype=float)), self.orientation)


IDENTITY = Pose()


def translation(x: float, y: float, z: float) -> Pose:
    return Pose((x, y, z))


def compose(a: Pose, b: Pose) -> Pose:
    """Return a∘b: apply b in a's frame."""
    return Pose(tuple(a.transform_point(b.position)), a.orientation * b.orientation)


def inverse(a: Pose) -> Pose:
    qi = a.orientation.conj()
    return Pose(tuple(-qi.rotate(a.position)), qi)


def quat_dot(q1: Quat, q2: Quat) -> float:
    return q1.w * q2.w + q1.x * q2.x + q1.y * q2.y + q1.z * q2.z


def geodesic_deg(q1: Quat, q2: Quat) -> float:
    d = min(1.0, abs(quat_dot(q1, q2)))
    return math.degrees(2.0 * math.acos(d))


@dataclass(frozen=True)
class PoseDelta:
    d_pos: float
    d_rot: float


def pose_delta(prev: Pose, cur: Pose) -> PoseDelta:
    d = math.dist(prev.position, cur.position)
    return PoseDelta(d, geodesic_deg(prev.orientation, cur.orientation))


def rotation_vector_in_frame(reference: Quat, q: Quat) -> np.ndarray:
    """Rotation taking ``reference`` to ``q`` as an axis-angle vector in the reference body frame."""
    return (reference.conj() * q).rotvec()


def slerp(q1: Quat, q2: Quat, s: float) -> Quat:
    """Shortest-arc spherical blend; s=0 gives q1, s=1 gives q2 exactly."""
    if s <= 0.0:
        return q1
    if s >= 1.0:
        return q2
    a, b = q1.as_array(), q2.as_array()
    d = float(a @ b)
    if d < 0.0:
        b, d = -b, -d
    if d > 0.9995:
        return Quat.from_array(a + s * (b - a))
    theta = math.acos(min(1.0, d))
    st = math.sin(theta)
    return Quat.from_array((math.sin((1 - s) * theta) * a + math.sin(s * theta) * b) / st)


def lerp_pose(a: Pose, b: Pose, s: float) -> Pose:
    if s <= 0.0:
        return a
    if s >= 1.0:
        return b
    return Pose(tuple(a.p + s * (b.p - a.p)), slerp(a.orientation, b.orientation, s))


def look_at(eye: Iterable[float], target: Iterable[float], up: Iterable[float] = (0.0, 0.0, 1.0)) -> Pose:
    """Camera pose (x right, y down, z forward) at ``eye`` looking at ``target``."""
    eye = np.asarray(list(eye), dtype=float)
    f = np.asarray(list(target), dtype=float) - eye
    f /= np.linalg.norm(f)
    right = np.cross(f, np.asarray(list(up), dtype=float))
    right /= np.linalg.norm(right)
    down = np.cross(f, right)
    R = np.column_stack([right, down, f])
    return Pose(tuple(eye), Quat.from_matrix(R))
