"""Serial-chain forward kinematics and damped least-squares IK."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .se3 import Pose, Quat

IK_DAMPING = 0.05
IK_MAX_ITERATIONS = 200
IK_POS_TOL = 1e-3  # m
IK_ROT_TOL = 2.0  # deg
# iterate past the acceptance tolerance so downstream tracking starts from a tight solution
_CONVERGED_POS = 1e-6
_CONVERGED_ROT = 1e-5
_MAX_STEP = 0.4  # rad per iteration


class Unreachable(ValueError):
    def __init__(self, message: str, pos_error: float = math.inf, rot_error: float = math.inf):
        super().__init__(message)
        self.pos_error = pos_error
        self.rot_error = rot_error


@dataclass(frozen=True)
class Joint:
    axis: tuple[float, float, float]
    origin_offset: tuple[float, float, float]
    theta_min: float
    theta_max: float
    name: str = ""

    def __post_init__(self):
        a = np.asarray(self.axis, dtype=float)
        n = np.linalg.norm(a)
        if n == 0:
            raise ValueError(f"joint {self.name!r} has a zero axis")
        object.__setattr__(self, "axis", tuple(float(c) for c in a / n))
        object.__setattr__(self, "origin_offset", tuple(float(c) for c in self.origin_offset))
        if not self.theta_min < self.theta_max:
            raise ValueError(f"joint {self.name!r}: theta_min must be below theta_max")


@dataclass(frozen=True)
class KinematicChain:
    joints: tuple[Joint, ...]
    base_pose: Pose = Pose()
    tool_offset: tuple[float, float, float] = (0.0, 0.0, 0.0)
    home: Optional[tuple[float, ...]] = None
    name: str = "arm"

    def __post_init__(self):
        object.__setattr__(self, "joints", tuple(self.joints))
        if self.home is not None and len(self.home) != len(self.joints):
            raise ValueError("home configuration length does not match joint count")

    @property
    def dof(self) -> int:
        return len(self.joints)

    @property
    def lower(self) -> np.ndarray:
        return np.array([j.theta_min for j in self.joints])

    @property
    def upper(self) -> np.ndarray:
        return np.array([j.theta_max for j in self.joints])

    @property
    def limits(self) -> list[tuple[float, float]]:
        return [(j.theta_min, j.theta_max) for j in self.joints]

    def home_config(self) -> np.ndarray:
        if self.home is not None:
            return np.array(self.home, dtype=float)
        return np.clip(np.zeros(self.dof), self.lower, self.upper)

    def reach(self) -> float:
        """Upper bound on the distance from the first joint to the tool point."""
        offs = [np.linalg.norm(j.origin_offset) for j in self.joints[1:]]
        return float(sum(offs) + np.linalg.norm(self.tool_offset))


def _rot(axis: np.ndarray, theta: float) -> np.ndarray:
    x, y, z = axis
    c, s = math.cos(theta), math.sin(theta)
    C = 1.0 - c
    return np.array(
        [
            [c + x * x * C, x * y * C - z * s, x * z * C + y * s],
            [y * x * C + z * s, c + y * y * C, y * z * C - x * s],
            [z * x * C - y * s, z * y * C + x * s, c + z * z * C],
        ]
    )


def _check_len(chain: KinematicChain, theta: Sequence[float]) -> np.ndarray:
    q = np.asarray(theta, dtype=float)
    if q.shape != (chain.dof,):
        raise ValueError(f"expected {chain.dof} joint values, got shape {q.shape}")
    return q


def _frames(chain: KinematicChain, q: np.ndarray):
    """World rotation/position of every joint, then of the tool."""
    R = chain.base_pose.orientation.matrix()
    p = chain.base_pose.p
    axes, origins = [], []
    for j, th in zip(chain.joints, q):
        p = p + R @ np.asarray(j.origin_offset)
        a = np.asarray(j.axis)
        axes.append(R @ a)
        origins.append(p)
        R = R @ _rot(a, th)
    p = p + R @ np.asarray(chain.tool_offset)
    return R, p, axes, origins


def fk_matrix(chain: KinematicChain, theta: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Tool rotation matrix and position."""
    R, p, _, _ = _frames(chain, _check_len(chain, theta))
    return R, p


def forward_kinematics(chain: KinematicChain, theta: Sequence[float]) -> Pose:
    R, p = fk_matrix(chain, theta)
    return Pose(tuple(p), Quat.from_matrix(R))


def jacobian(chain: KinematicChain, theta: Sequence[float]) -> np.ndarray:
    """6 x n geometric Jacobian (linear rows first) of the tool point in the world frame."""
    _, p, axes, origins = _frames(chain, _check_len(chain, theta))
    J = np.empty((6, chain.dof))
    for i, (a, o) in enumerate(zip(axes, origins)):
        J[:3, i] = np.cross(a, p - o)
        J[3:, i] = a
    return J


def _log_so3(R: np.ndarray) -> np.ndarray:
    return Quat.from_matrix(R).rotvec()


def pose_error(chain: KinematicChain, theta: Sequence[float], target: Pose) -> tuple[float, float]:
    """(position error [m], orientation error [deg]) of the tool against ``target``."""
    R, p = fk_matrix(chain, theta)
    e_r = _log_so3(target.orientation.matrix() @ R.T)
    return float(np.linalg.norm(target.p - p)), math.degrees(float(np.linalg.norm(e_r)))


def ik_solve(
    chain: KinematicChain,
    target: Pose,
    seed: Sequence[float],
    damping: float = IK_DAMPING,
    max_iterations: int = IK_MAX_ITERATIONS,
    pos_tol: float = IK_POS_TOL,
    rot_tol: float = IK_ROT_TOL,
) -> np.ndarray:
    """Damped least-squares IK, clamped to joint limits at every iteration.

    Raises :class:`Unreachable` if the residual is still above ``pos_tol`` /
    ``rot_tol`` (degrees) after ``max_iterations``.
    """
    if not np.all(np.isfinite(target.p)):
        raise ValueError("target must be finite")
    q = np.clip(_check_len(chain, seed).copy(), chain.lower, chain.upper)
    lo, hi = chain.lower, chain.upper
    R_t, p_t = target.orientation.matrix(), target.p
    lam2 = damping * damping
    eye6 = np.eye(6)
    best_q, best = q.copy(), (math.inf, math.inf)
    for _ in range(max_iterations + 1):
        R, p, axes, origins = _frames(chain, q)
        e = np.concatenate([p_t - p, _log_so3(R_t @ R.T)])
        ep, er = float(np.linalg.norm(e[:3])), float(np.linalg.norm(e[3:]))
        if ep + er < best[0] + best[1]:
            best_q, best = q.copy(), (ep, er)
        if ep <= _CONVERGED_POS and er <= _CONVERGED_ROT:
            break
        J = np.empty((6, chain.dof))
        for i, (a, o) in enumerate(zip(axes, origins)):
            J[:3, i] = np.cross(a, p - o)
            J[3:, i] = a
        dq = J.T @ np.linalg.solve(J @ J.T + lam2 * eye6, e)
        step = np.max(np.abs(dq))
        if step > _MAX_STEP:
            dq *= _MAX_STEP / step
        q = np.clip(q + dq, lo, hi)
    ep, er = best
    if ep > pos_tol or math.degrees(er) > rot_tol:
        raise Unreachable(
            f"IK residual {ep * 1e3:.2f} mm / {math.degrees(er):.2f} deg above tolerance",
            ep,
            math.degrees(er),
        )
    return best_q


def ik_solve_multi(chain: KinematicChain, target: Pose, seeds: Sequence[Sequence[float]], **kw) -> np.ndarray:
    """Try each seed in order; the first success wins."""
    last: Optional[Unreachable] = None
    for s in seeds:
        try:
            return ik_solve(chain, target, s, **kw)
        except Unreachable as e:
            last = e
    raise last if last is not None else Unreachable("no seeds given")


# ----------------------------------------------------------------- file format

def load_chain(path: str | Path) -> KinematicChain:
    return parse_chain(Path(path).read_text(), name=Path(path).stem)


def parse_chain(text: str, name: str = "arm") -> KinematicChain:
    """Parse the line-oriented kinematics format (see ``docs/formats.md``)."""
    joints, tool, base, home = [], (0.0, 0.0, 0.0), Pose(), None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        kind, rest = tok[0].lower(), tok[1:]
        try:
            if kind == "joint":
                if len(rest) not in (8, 9):
                    raise ValueError("joint needs: ax ay az  ox oy oz  min max [name]")
                v = [float(t) for t in rest[:8]]
                joints.append(Joint(tuple(v[0:3]), tuple(v[3:6]), v[6], v[7], rest[8] if len(rest) == 9 else ""))
            elif kind == "tool":
                tool = tuple(float(t) for t in rest)
                if len(tool) != 3:
                    raise ValueError("tool needs 3 numbers")
            elif kind == "base":
                v = [float(t) for t in rest]
                if len(v) not in (3, 7):
                    raise ValueError("base needs x y z [qw qx qy qz]")
                base = Pose(tuple(v[:3]), Quat(*v[3:]) if len(v) == 7 else Quat())
            elif kind == "home":
                home = tuple(float(t) for t in rest)
            else:
                raise ValueError(f"unknown record {kind!r}")
        except ValueError as e:
            raise ValueError(f"line {lineno}: {e}") from None
    if not joints:
        raise ValueError("chain has no joints")
    return KinematicChain(tuple(joints), base, tool, home, name)


def format_chain(chain: KinematicChain) -> str:
    lines = [f"# {chain.name}: axis(3) offset(3) theta_min theta_max name"]
    b = chain.base_pose
    lines.append("base " + " ".join(repr(c) for c in (*b.position, *b.orientation.as_tuple())))
    for j in chain.joints:
        nums = " ".join(repr(c) for c in (*j.axis, *j.origin_offset, j.theta_min, j.theta_max))
        lines.append(f"joint {nums} {j.name}".rstrip())
    lines.append("tool " + " ".join(repr(c) for c in chain.tool_offset))
    if chain.home is not None:
        lines.append("home " + " ".join(repr(c) for c in chain.home))
    return "\n".join(lines) + "\n"
