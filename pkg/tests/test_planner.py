import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import point_segment_distance, smoothstep_reference
from rapidgrasp.kinematics import forward_kinematics
from rapidgrasp.planner import (
    GRASP_SEQUENCE,
    HAND_ORIENTATION,
    PlanStage,
    TrajectoryExecutor,
    TrajectoryPlan,
    Waypoint,
    default_chain,
    interpolate,
    load_polyline,
    normalize_joints,
    offset_polyline,
    plan_glue_path,
    plan_grasp,
    polyline_normal,
    smoothstep,
)
from rapidgrasp.se3 import Pose, Quat, geodesic_deg, translation
from rapidgrasp.simworld import BOTTLE

ARM = default_chain()
UPRIGHT = Quat.from_axis_angle((1, 0, 0), math.pi / 2)
CENTER = Pose((0.70, 0.0, 0.11), UPRIGHT)


@pytest.fixture(scope="module")
def center_plan():
    return plan_grasp(CENTER, BOTTLE, ARM)


# --- smoothstep --------------------------------------------------------------

def test_smoothstep_values():
    assert smoothstep(0.0) == 0.0 and smoothstep(1.0) == 1.0
    assert smoothstep(0.5) == 0.5
    assert smoothstep_reference(0.25) == 0.15625
    assert smoothstep(0.25) == 0.15625


def test_smoothstep_endpoint_derivatives_vanish():
    h = 1e-7
    assert abs((smoothstep(h) - smoothstep(0.0)) / h) < 1e-6
    assert abs((smoothstep(1.0) - smoothstep(1.0 - h)) / h) < 1e-6


@given(st.floats(0.0, 1.0))
def test_smoothstep_matches_reference(u):
    assert smoothstep(u) == pytest.approx(smoothstep_reference(u), abs=1e-15)
    assert 0.0 <= smoothstep(u) <= 1.0


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_smoothstep_monotone(a, b):
    lo, hi = min(a, b), max(a, b)
    assert smoothstep(lo) <= smoothstep(hi)


# --- interpolation -----------------------------------------------------------

def two_point_plan():
    a = translation(0.0, 0.0, 0.0)
    b = Pose((1.0, 0.0, 0.0), Quat.from_axis_angle((0, 0, 1), 1.0))
    return TrajectoryPlan(a, 0.0, (PlanStage("Move", (Waypoint(b, 1.0, 2.0),)),)), a, b


def test_interpolate_endpoints_exact():
    plan, a, b = two_point_plan()
    assert interpolate(plan, 0.0) == (a, 0.0)
    assert interpolate(plan, 2.0) == (b, 1.0)


def test_interpolate_quarter_time():
    plan, a, b = two_point_plan()
    pose, g = interpolate(plan, 0.5)
    assert pose.position[0] == pytest.approx(0.15625)
    assert g == pytest.approx(0.15625)
    assert geodesic_deg(a.orientation, pose.orientation) == pytest.approx(math.degrees(0.15625), abs=1e-9)


def test_interpolate_outside_plan():
    plan, _, _ = two_point_plan()
    with pytest.raises(ValueError):
        interpolate(plan, 2.5)
    with pytest.raises(ValueError):
        interpolate(plan, -0.1)


def test_waypoint_validation():
    with pytest.raises(ValueError):
        Waypoint(Pose(), 0.5, 0.0)
    with pytest.raises(ValueError):
        Waypoint(Pose(), 1.5, 1.0)


# --- normalization -----------------------------------------------------------

def test_normalize_limits_and_midpoint():
    lo, hi = ARM.lower, ARM.upper
    assert normalize_joints(lo, ARM) == [0.0] * 7
    assert normalize_joints((lo + hi) / 2, ARM) == pytest.approx([0.5] * 7)
    assert normalize_joints(hi + 1.0, ARM) == [1.0] * 7


def test_normalize_wrong_length():
    with pytest.raises(ValueError):
        normalize_joints([0.0], ARM)


# --- grasp plan --------------------------------------------------------------

def test_grasp_stage_sequence(center_plan):
    assert center_plan.stage_names == [s.value for s in GRASP_SEQUENCE]
    assert center_plan.duration == pytest.approx(12.0)
    assert [w.gripper for w in center_plan.waypoints] == [0, 0, 0, 1, 1, 0]


def test_lift_above_descent(center_plan):
    wps = {n: w for n, w in center_plan.flat()}
    assert wps["Lift"].target.position[2] - wps["Descent"].target.position[2] >= 0.05


def test_grasp_waypoints_are_reachable(center_plan):
    for w in center_plan.waypoints:
        reached = forward_kinematics(ARM, w.joints)
        assert np.linalg.norm(reached.p - w.target.p) <= 1e-3
        assert geodesic_deg(reached.orientation, w.target.orientation) <= 2.0


def test_plan_translates_with_object(center_plan):
    moved = plan_grasp(CENTER.translated((0.0, -0.05, 0.0)), BOTTLE, ARM)
    assert moved.stage_names == center_plan.stage_names
    for a, b in zip(center_plan.waypoints, moved.waypoints):
        assert np.allclose(b.target.p - a.target.p, (0.0, -0.05, 0.0), atol=1e-12)
        assert a.gripper == b.gripper and a.duration == b.duration


def test_plan_ignores_symmetry_axis_rotation(center_plan):
    spun = Pose(CENTER.position, CENTER.orientation * Quat.from_axis_angle((0, 1, 0), 1.3))
    assert plan_grasp(spun, BOTTLE, ARM) == center_plan


def test_grasp_out_of_reach():
    from rapidgrasp.kinematics import Unreachable

    with pytest.raises(Unreachable):
        plan_grasp(Pose((1.6, 0.0, 0.11), UPRIGHT), BOTTLE, ARM)


# --- glue path ---------------------------------------------------------------

EDGE = np.array([[0.64, -0.06, 0.15], [0.78, -0.06, 0.15], [0.78, 0.06, 0.15], [0.64, 0.06, 0.15], [0.64, -0.06, 0.15]])


def test_polyline_normal_points_up():
    assert np.allclose(polyline_normal(EDGE), (0, 0, 1))
    assert np.allclose(polyline_normal(EDGE[::-1]), (0, 0, 1))
    assert np.allclose(polyline_normal(EDGE[:2]), (0, 0, 1))  # degenerate: default


def test_offset_polyline():
    assert np.allclose(offset_polyline(EDGE, 0.02), EDGE + [0, 0, 0.02])


def test_two_vertex_edge():
    plan = plan_glue_path(EDGE[:2], 0.02, ARM)
    assert len(plan.waypoints) == 2
    assert np.allclose(plan.waypoints[1].target.p, EDGE[1] + [0, 0, 0.02])
    # every interpolated point lies on the offset segment
    t0 = plan.waypoints[0].duration
    for t in np.linspace(t0, plan.duration, 25):
        p = interpolate(plan, t)[0].p
        assert point_segment_distance(p, EDGE[0] + [0, 0, 0.02], EDGE[1] + [0, 0, 0.02]) < 1e-12


def test_closed_edge_returns_to_start():
    plan = plan_glue_path(EDGE, 0.02, ARM)
    assert plan.waypoints[0].target == plan.waypoints[-1].target
    assert all(w.gripper == 1.0 for w in plan.waypoints)
    assert plan.stage_names[0] == "GluePath[0]"


def test_glue_segment_timing():
    plan = plan_glue_path(EDGE, 0.02, ARM, speed=0.05, lead_in=2.0)
    durs = [w.duration for w in plan.waypoints]
    assert durs[0] == 2.0
    assert durs[1] == pytest.approx(0.14 / 0.05)
    assert durs[2] == pytest.approx(0.12 / 0.05)


def test_glue_rejects_bad_edge():
    with pytest.raises(ValueError):
        plan_glue_path(EDGE[:1], 0.02, ARM)


def test_load_polyline(tmp_path):
    f = tmp_path / "edge.txt"
    f.write_text("# edge\nstandoff 0.03\nnormal 0 0 1\n0 0 0\n1 0 0  # trailing\n")
    verts, meta = load_polyline(f)
    assert verts.shape == (2, 3)
    assert meta == {"standoff": 0.03, "normal": (0.0, 0.0, 1.0)}


@pytest.mark.parametrize("text", ["0 0 0\n", "0 0\n1 1\n", "standoff x\n0 0 0\n1 1 1\n"])
def test_load_polyline_errors(tmp_path, text):
    f = tmp_path / "bad.txt"
    f.write_text(text)
    with pytest.raises(ValueError):
        load_polyline(f)


# --- executor ----------------------------------------------------------------

def test_executor_pauses_and_aborts(center_plan):
    ex = TrajectoryExecutor(center_plan, ARM, abort_after=1.0)
    ex.tick(0.1)
    t = ex.t
    for _ in range(10):
        ex.tick(0.1, object_tracked=False)
    assert ex.t == t and not ex.aborted
    ex.tick(0.1, object_tracked=True)  # tracking again resets the pause clock
    for _ in range(10):
        ex.tick(0.1, object_tracked=False)
    assert not ex.aborted
    ex.tick(0.1, object_tracked=False)
    assert ex.aborted and ex.done


def test_executor_reaches_final_waypoint(center_plan):
    ex = TrajectoryExecutor(center_plan, ARM)
    while not ex.done:
        q, g = ex.tick(1 / 30)
    assert np.linalg.norm(forward_kinematics(ARM, q).p - center_plan.waypoints[-1].target.p) <= 1e-3
    assert g == 0.0 and ex.stage == "Release"
