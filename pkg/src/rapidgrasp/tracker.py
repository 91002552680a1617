"""Per-object tracking state machine: UNINITIALIZED -> TRACKING <-> LOST.

The machine is a pure step function over an immutable ``TrackerState``; the
pose estimator is injected as a callable so the simulated backend and a real
one run through the same transitions.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

from .se3 import Pose, pose_delta
from .simworld import IMAGE_HEIGHT, IMAGE_WIDTH, Detection, EstimateResult, EstimatorMode

ROI_EXPANSION = 0.10


class Phase(str, enum.Enum):
    UNINITIALIZED = "UNINITIALIZED"
    TRACKING = "TRACKING"
    LOST = "LOST"


LEGAL_TRANSITIONS = frozenset(
    {
        (Phase.UNINITIALIZED, Phase.TRACKING),
        (Phase.TRACKING, Phase.LOST),
        (Phase.LOST, Phase.TRACKING),
    }
)


class LossReason(str, enum.Enum):
    FAILURES = "consecutive_failures"
    POSITION_JUMP = "position_jump"
    ROTATION_JUMP = "rotation_jump"
    DETECTION_TIMEOUT = "detection_timeout"


@dataclass(frozen=True)
class Roi:
    rect: tuple[int, int, int, int]

    def __post_init__(self):
        u0, v0, u1, v1 = self.rect
        if not (0 <= u0 < u1 <= IMAGE_WIDTH - 1 and 0 <= v0 < v1 <= IMAGE_HEIGHT - 1):
            raise ValueError(f"invalid ROI {self.rect}")


def roi_from_bbox(d: Detection, expand: float = ROI_EXPANSION) -> Roi:
    """Grow the bbox by ``expand`` of its extent on every side, clamped to the image."""
    u0, v0, u1, v1 = d.bbox
    du, dv = expand * (u1 - u0), expand * (v1 - v0)
    a = max(0, math.floor(u0 - du))
    b = max(0, math.floor(v0 - dv))
    c = min(IMAGE_WIDTH - 1, math.ceil(u1 + du))
    e = min(IMAGE_HEIGHT - 1, math.ceil(v1 + dv))
    # keep at least one pixel of extent for degenerate boxes
    if c <= a:
        a, c = (a, a + 1) if a < IMAGE_WIDTH - 1 else (a - 1, a)
    if e <= b:
        b, e = (b, b + 1) if b < IMAGE_HEIGHT - 1 else (b - 1, b)
    return Roi((a, b, c, e))


@dataclass(frozen=True)
class TrackerThresholds:
    max_consecutive_failures: int = 3
    max_pos_jump: float = 0.15  # m
    max_rot_jump: float = 90.0  # deg
    detection_timeout: float = 3.0  # s
    frame_rate: float = 30.0  # Hz

    def __post_init__(self):
        if min(self.max_consecutive_failures, self.max_pos_jump, self.max_rot_jump,
               self.detection_timeout, self.frame_rate) <= 0:
            raise ValueError("tracker thresholds must be positive")

    @property
    def timeout_frames(self) -> float:
        return self.detection_timeout * self.frame_rate


@dataclass(frozen=True)
class TrackerState:
    phase: Phase = Phase.UNINITIALIZED
    last_pose: Optional[Pose] = None
    consecutive_failures: int = 0
    last_detection_frame: Optional[int] = None
    last_update_frame: Optional[int] = None
    reinit_count: int = 0
    last_frame: Optional[int] = None
    last_confidence: float = 0.0
    loss_reason: Optional[LossReason] = None


Estimator = Callable[[EstimatorMode, Optional[Pose], Optional[Roi], int], EstimateResult]


def _lose(state: TrackerState, reason: LossReason, **kw) -> TrackerState:
    return replace(state, phase=Phase.LOST, consecutive_failures=0, loss_reason=reason, **kw)


def tracker_step(
    state: TrackerState,
    thresholds: TrackerThresholds,
    frame: int,
    detection: Optional[Detection],
    estimator: Estimator,
) -> tuple[TrackerState, Optional[Pose]]:
    """Advance one frame.  Returns the new state and the emitted pose (``None`` unless tracking)."""
    if state.last_frame is not None and frame <= state.last_frame:
        raise ValueError(f"frame index must increase: got {frame} after {state.last_frame}")
    state = replace(state, last_frame=frame)
    if detection is not None:
        state = replace(state, last_detection_frame=frame, last_confidence=detection.confidence)

    if state.phase is not Phase.TRACKING:
        if detection is None:
            return state, None
        res = estimator(EstimatorMode.REGISTRATION, None, roi_from_bbox(detection), frame)
        if not res.success:
            return state, None
        reinit = state.reinit_count + (1 if state.phase is Phase.LOST else 0)
        state = replace(
            state,
            phase=Phase.TRACKING,
            last_pose=res.pose,
            consecutive_failures=0,
            last_update_frame=frame,
            reinit_count=reinit,
            loss_reason=None,
        )
        return state, res.pose

    if state.last_detection_frame is None or frame - state.last_detection_frame > thresholds.timeout_frames:
        return _lose(state, LossReason.DETECTION_TIMEOUT), None

    res = estimator(EstimatorMode.TRACKING, state.last_pose, None, frame)
    if not res.success:
        failures = state.consecutive_failures + 1
        if failures >= thresholds.max_consecutive_failures:
            return _lose(state, LossReason.FAILURES), None
        return replace(state, consecutive_failures=failures), None

    delta = pose_delta(state.last_pose, res.pose)
    if delta.d_pos > thresholds.max_pos_jump:
        return _lose(state, LossReason.POSITION_JUMP), None
    if delta.d_rot > thresholds.max_rot_jump:
        return _lose(state, LossReason.ROTATION_JUMP), None
    state = replace(state, last_pose=res.pose, consecutive_failures=0, last_update_frame=frame)
    return state, res.pose


class Tracker:
    """Mutable single-owner wrapper around :func:`tracker_step` for one object."""

    def __init__(self, object_id: str, class_label: str, estimator: Estimator,
                 thresholds: TrackerThresholds = TrackerThresholds()):
        self.object_id = object_id
        self.class_label = class_label
        self.estimator = estimator
        self.thresholds = thresholds
        self.state = TrackerState()

    def step(self, frame: int, detection: Optional[Detection]) -> Optional[Pose]:
        self.state, pose = tracker_step(self.state, self.thresholds, frame, detection, self.estimator)
        return pose
