"""Walk the tracker through each way of losing an object, and back.

A scripted estimator hands the tracker whatever pose we choose for each
frame, so every transition happens on a frame we can predict.
"""
import math

from rapidgrasp.se3 import Pose, Quat, translation
from rapidgrasp.simworld import Detection, EstimateResult
from rapidgrasp.tracker import Tracker

HOME = translation(0.0, 0.0, 0.7)


def scripted(poses):
    def estimate(mode, prior, roi, frame):
        pose = poses.get(frame, HOME)
        return EstimateResult(pose is not None, pose, 1)
    return estimate


def box(frame):
    return Detection(frame, (300.0, 200.0, 340.0, 280.0), 0.9, "bottle")


def show(title, poses, last_frame, detections=(0,)):
    t = Tracker("bottle-0", "bottle", scripted(poses))
    print(f"\n{title}")
    for f in range(last_frame + 1):
        before = t.state.phase
        t.step(f, box(f) if f in detections else None)
        if t.state.phase is not before:
            reason = t.state.loss_reason.value if t.state.loss_reason else "-"
            print(f"  frame {f:>3}: {before.value} -> {t.state.phase.value} ({reason}), reinit={t.state.reinit_count}")


show("three estimator failures in a row", {1: None, 2: None, 3: None}, 5)
show("a 16 cm jump between frames", {1: translation(0.16, 0.0, 0.7)}, 2)
spin = Pose(HOME.position, Quat.from_axis_angle((0, 0, 1), math.radians(95)))
show("a 95 degree flip", {1: spin}, 2)
show("no detection for more than three seconds, then one arrives", {}, 100, detections=(0, 100))
