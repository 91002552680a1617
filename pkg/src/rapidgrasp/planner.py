"""Waypoint planning for the grasp and glue tasks, smoothstep interpolation
and joint normalization for the command wire."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .kinematics import KinematicChain, Unreachable, forward_kinematics, ik_solve, ik_solve_multi, load_chain
from .se3 import Pose, Quat, lerp_pose
from .simworld import ObjectSpec

# Hand frame: tool axis pointing forward (+x) with the fingers closing around
# a vertical axis.  Fixed for every waypoint, so plans ignore object yaw.
HAND_ORIENTATION = Quat.from_axis_angle((0.0, 1.0, 0.0), -math.pi / 2)

STAGING_HEIGHT = 0.15  # above object top
APPROACH_CLEARANCE = 0.10  # above object top
LIFT_HEIGHT = 0.10
STAGE_DURATION = 2.0  # s
GLUE_SPEED = 0.05  # m/s along the edge
GLUE_MIN_SEGMENT = 1.0  # s


class GraspStage(str, enum.Enum):
    PRE_GRASP_LIFT = "PreGraspLift"
    APPROACH = "Approach"
    DESCENT = "Descent"
    GRIPPER_CLOSE = "GripperClose"
    LIFT = "Lift"
    RELEASE = "Release"


GRASP_SEQUENCE = tuple(GraspStage)


@dataclass(frozen=True)
class Waypoint:
    target: Pose
    gripper: float
    duration: float
    joints: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("waypoint duration must be positive")
        if not 0.0 <= self.gripper <= 1.0:
            raise ValueError("gripper value must lie in [0, 1]")


@dataclass(frozen=True)
class PlanStage:
    name: str
    waypoints: tuple[Waypoint, ...]


@dataclass(frozen=True)
class TrajectoryPlan:
    start: Pose
    start_gripper: float
    stages: tuple[PlanStage, ...]
    start_joints: Optional[tuple[float, ...]] = None
    _times: tuple[float, ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        ends, t = [], 0.0
        for _, w in self.flat():
            t += w.duration
            ends.append(t)
        object.__setattr__(self, "_times", tuple(ends))

    def flat(self) -> list[tuple[str, Waypoint]]:
        return [(s.name, w) for s in self.stages for w in s.waypoints]

    @property
    def waypoints(self) -> list[Waypoint]:
        return [w for _, w in self.flat()]

    @property
    def duration(self) -> float:
        return self._times[-1] if self._times else 0.0

    @property
    def stage_names(self) -> list[str]:
        return [s.name for s in self.stages]

    def stage_end_times(self) -> dict[str, float]:
        out, k = {}, 0
        for s in self.stages:
            k += len(s.waypoints)
            out[s.name] = self._times[k - 1]
        return out

    def segment_at(self, t: float) -> tuple[int, float]:
        """Index of the waypoint being approached at time ``t`` and the local parameter u."""
        if not 0.0 <= t <= self.duration:
            raise ValueError(f"t={t} outside [0, {self.duration}]")
        idx = int(np.searchsorted(self._times, t, side="left"))
        idx = min(idx, len(self._times) - 1)
        t0 = self._times[idx - 1] if idx > 0 else 0.0
        w = self.waypoints[idx]
        return idx, min(1.0, max(0.0, (t - t0) / w.duration))

    def stage_at(self, t: float) -> str:
        idx, _ = self.segment_at(t)
        return self.flat()[idx][0]


def smoothstep(u: float) -> float:
    return u * u * (3.0 - 2.0 * u)


def interpolate(plan: TrajectoryPlan, t: float) -> tuple[Pose, float]:
    """Target pose and gripper value at time ``t``, blended with smoothstep inside each segment."""
    idx, u = plan.segment_at(t)
    wps = plan.waypoints
    prev_pose, prev_g = (plan.start, plan.start_gripper) if idx == 0 else (wps[idx - 1].target, wps[idx - 1].gripper)
    w = wps[idx]
    s = smoothstep(u)
    if u >= 1.0:
        return w.target, w.gripper
    if u <= 0.0:
        return prev_pose, prev_g
    return lerp_pose(prev_pose, w.target, s), prev_g + s * (w.gripper - prev_g)


def normalize_joints(theta: Sequence[float], chain: KinematicChain) -> list[float]:
    q = np.asarray(theta, dtype=float)
    if q.shape != (chain.dof,):
        raise ValueError(f"expected {chain.dof} joint values, got shape {q.shape}")
    n = (q - chain.lower) / (chain.upper - chain.lower)
    return [float(v) for v in np.clip(n, 0.0, 1.0)]


def default_chain() -> KinematicChain:
    with resources.as_file(resources.files("rapidgrasp") / "data" / "g1_right_arm.txt") as p:
        return load_chain(p)


def _solve_sequence(chain: KinematicChain, targets: Sequence[Pose], seed: np.ndarray) -> list[tuple[float, ...]]:
    """IK each target in order, warm-starting from the previous solution (home as fallback)."""
    out = []
    home = chain.home_config()
    for tgt in targets:
        q = ik_solve_multi(chain, tgt, [seed, home])
        out.append(tuple(float(v) for v in q))
        seed = q
    return out


def plan_grasp(
    object_pose: Pose,
    obj: ObjectSpec,
    chain: KinematicChain,
    start_joints: Optional[Sequence[float]] = None,
    stage_duration: float = STAGE_DURATION,
) -> TrajectoryPlan:
    """Six-stage grasp of an upright cylinder centred at ``object_pose``.

    Only the object's position is used: the hand orientation is fixed, so
    rotating the object about its symmetry axis leaves the plan unchanged.
    Raises :class:`Unreachable` when any waypoint has no IK solution.
    """
    q0 = chain.home_config() if start_joints is None else np.asarray(start_joints, dtype=float)
    c = object_pose.p
    top = c[2] + obj.height / 2.0
    grasp = (c[0], c[1], c[2])

    def at(z):
        return Pose((grasp[0], grasp[1], z), HAND_ORIENTATION)

    targets = [
        (GraspStage.PRE_GRASP_LIFT, at(top + STAGING_HEIGHT), 0.0),
        (GraspStage.APPROACH, at(top + APPROACH_CLEARANCE), 0.0),
        (GraspStage.DESCENT, at(grasp[2]), 0.0),
        (GraspStage.GRIPPER_CLOSE, at(grasp[2]), 1.0),
        (GraspStage.LIFT, at(grasp[2] + LIFT_HEIGHT), 1.0),
        (GraspStage.RELEASE, at(grasp[2] + LIFT_HEIGHT), 0.0),
    ]
    joints = _solve_sequence(chain, [p for _, p, _ in targets], q0)
    stages = tuple(
        PlanStage(name.value, (Waypoint(p, g, stage_duration, j),))
        for (name, p, g), j in zip(targets, joints)
    )
    return TrajectoryPlan(forward_kinematics(chain, q0), 0.0, stages, tuple(float(v) for v in q0))


def polyline_normal(edge: np.ndarray) -> np.ndarray:
    """Plane normal of a polyline (Newell's method), oriented upwards; +z if degenerate."""
    n = np.zeros(3)
    for a, b in zip(edge, np.roll(edge, -1, axis=0)):
        n += np.array([(a[1] - b[1]) * (a[2] + b[2]), (a[2] - b[2]) * (a[0] + b[0]), (a[0] - b[0]) * (a[1] + b[1])])
    norm = np.linalg.norm(n)
    if norm < 1e-9:
        return np.array([0.0, 0.0, 1.0])
    n /= norm
    return -n if n[2] < 0 else n


def offset_polyline(edge: Sequence[Sequence[float]], standoff: float, normal: Optional[Sequence[float]] = None) -> np.ndarray:
    e = np.asarray(edge, dtype=float)
    n = polyline_normal(e) if normal is None else np.asarray(normal, dtype=float) / np.linalg.norm(normal)
    return e + standoff * n


def plan_glue_path(
    edge: Sequence[Sequence[float]],
    standoff: float,
    chain: KinematicChain,
    normal: Optional[Sequence[float]] = None,
    start_joints: Optional[Sequence[float]] = None,
    speed: float = GLUE_SPEED,
    lead_in: float = STAGE_DURATION,
    orientation: Quat = HAND_ORIENTATION,
) -> TrajectoryPlan:
    """One waypoint per edge vertex, offset by ``standoff`` along the surface normal.

    The hand stays closed on the glue stick and keeps one orientation for the
    whole path.  The first waypoint is reached in ``lead_in`` seconds; later
    segments take their length over ``speed``.
    """
    e = np.asarray(edge, dtype=float)
    if e.ndim != 2 or e.shape[1] != 3 or len(e) < 2:
        raise ValueError("edge must be a polyline of at least two 3-vectors")
    path = offset_polyline(e, standoff, normal)
    q0 = chain.home_config() if start_joints is None else np.asarray(start_joints, dtype=float)
    targets = [Pose(tuple(p), orientation) for p in path]
    joints = _solve_sequence(chain, targets, q0)
    stages = []
    for i, (tgt, j) in enumerate(zip(targets, joints)):
        if i == 0:
            dur = lead_in
        else:
            dur = max(GLUE_MIN_SEGMENT, float(np.linalg.norm(path[i] - path[i - 1])) / speed)
        stages.append(PlanStage(f"GluePath[{i}]", (Waypoint(tgt, 1.0, dur, j),)))
    return TrajectoryPlan(forward_kinematics(chain, q0), 1.0, tuple(stages), tuple(float(v) for v in q0))


def load_polyline(path: str | Path) -> tuple[np.ndarray, dict]:
    """Read a vertex file: ``x y z`` per line plus optional ``standoff`` / ``normal`` records."""
    verts, meta = [], {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if tok[0] == "standoff":
                meta["standoff"] = float(tok[1])
            elif tok[0] == "normal":
                meta["normal"] = tuple(float(t) for t in tok[1:4])
            else:
                if len(tok) != 3:
                    raise ValueError("vertex needs x y z")
                verts.append([float(t) for t in tok])
        except (ValueError, IndexError) as err:
            raise ValueError(f"{path}:{lineno}: {err}") from None
    if len(verts) < 2:
        raise ValueError(f"{path}: need at least two vertices")
    return np.array(verts), meta


# ------------------------------------------------------------------ execution

class TrajectoryExecutor:
    """Walks a plan in real time, solving IK for each interpolated target.

    While the tracked object is not TRACKING the executor holds its last
    command and does not advance; after ``abort_after`` seconds of that it
    aborts the plan.
    """

    def __init__(self, plan: TrajectoryPlan, chain: KinematicChain, abort_after: float = 5.0):
        self.plan = plan
        self.chain = chain
        self.abort_after = abort_after
        self.t = 0.0
        self.paused_for = 0.0
        self.aborted = False
        q0 = plan.start_joints if plan.start_joints is not None else chain.home_config()
        self.joints = np.asarray(q0, dtype=float)
        self.gripper = plan.start_gripper
        self.max_residual = 0.0

    @property
    def done(self) -> bool:
        return self.aborted or self.t >= self.plan.duration

    @property
    def stage(self) -> str:
        return self.plan.stage_at(min(self.t, self.plan.duration))

    def tick(self, dt: float, object_tracked: bool = True) -> tuple[np.ndarray, float]:
        if self.done:
            return self.joints, self.gripper
        if not object_tracked:
            self.paused_for += dt
            if self.paused_for > self.abort_after:
                self.aborted = True
            return self.joints, self.gripper
        self.paused_for = 0.0
        self.t = min(self.plan.duration, self.t + dt)
        target, self.gripper = interpolate(self.plan, self.t)
        try:
            self.joints = ik_solve(self.chain, target, self.joints)
        except Unreachable:
            self.joints = ik_solve_multi(self.chain, target, [self.chain.home_config()])
        return self.joints, self.gripper
