import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import pinhole
from rapidgrasp.se3 import Pose, Quat, geodesic_deg, translation
from rapidgrasp.simworld import (
    BOTTLE,
    OCCLUSION_BASE_SIGMA,
    OCCLUSION_WINDOWS,
    EstimatorMode,
    ObjectSpec,
    OcclusionWindow,
    ScenarioConfig,
    ScenarioKind,
    expected_sigma_xyz,
    ground_truth,
    parse_config,
    preset,
    project_bbox,
    rng_for,
    simulate_detection,
    simulate_estimate,
)

ZERO_NOISE = dict(noise_pos_sigma=0.0, noise_rot_sigma=0.0, rot_drift_sigma=0.0)


# --- ground truth ---------------------------------------------------------

def test_static_truth_is_constant():
    cfg = preset("static")
    assert ground_truth(cfg, BOTTLE, 0) == ground_truth(cfg, BOTTLE, 977)


def test_dynamic_truth_is_periodic():
    cfg = preset("dynamic")
    period = int(cfg.motion_period * cfg.frame_rate)
    a, b = ground_truth(cfg, BOTTLE, 0), ground_truth(cfg, BOTTLE, period)
    assert np.allclose(a.p, b.p, atol=1e-12)
    assert geodesic_deg(a.orientation, b.orientation) < 1e-6


def test_dynamic_excursion_equals_amplitude():
    cfg = preset("dynamic")
    period = int(cfg.motion_period * cfg.frame_rate)
    base = cfg.base_pose.p
    excursion = max(np.linalg.norm(ground_truth(cfg, BOTTLE, f).p - base) for f in range(period + 1))
    assert excursion == pytest.approx(cfg.motion_amplitude, abs=1e-6)


def test_truth_out_of_range():
    with pytest.raises(IndexError):
        ground_truth(preset("static"), BOTTLE, 1312)


# --- detection ------------------------------------------------------------

def test_detection_cadence():
    cfg = preset("static")
    gt = ground_truth(cfg, BOTTLE, 0)
    assert simulate_detection(cfg, BOTTLE, 3, gt) is None
    d = simulate_detection(cfg, BOTTLE, 5, gt)
    assert d is not None and d.class_label == "bottle"
    assert 0.75 <= d.confidence <= 1.0


def test_centered_object_bbox_centre():
    bbox = project_bbox(BOTTLE, translation(0, 0, 0.7))
    u = (bbox[0] + bbox[2]) / 2
    v = (bbox[1] + bbox[3]) / 2
    assert abs(u - 320.0) <= 2.0 and abs(v - 240.0) <= 2.0


def test_bbox_matches_pinhole_oracle():
    # an upright 22 cm x 6 cm cylinder 0.7 m ahead: the near rim edge is at z = 0.67
    bbox = project_bbox(BOTTLE, translation(0, 0, 0.7))
    top = pinhole((0.0, -0.11, 0.67))[1]
    side = pinhole((0.03, 0.0, 0.7))[0]
    assert bbox[1] == pytest.approx(top, abs=0.5)
    assert bbox[2] == pytest.approx(side, abs=0.5)


def test_object_behind_camera_not_detected():
    cfg = preset("static")
    assert simulate_detection(cfg, BOTTLE, 0, translation(0, 0, -0.5)) is None


def test_heavy_occlusion_suppresses_detection():
    cfg = preset("occlusion")
    gt = ground_truth(cfg, BOTTLE, 0)
    assert cfg.occlusion(305) == pytest.approx(0.7)
    assert simulate_detection(cfg, BOTTLE, 305, gt) is None
    assert simulate_detection(cfg, BOTTLE, 100, gt) is not None  # half occluded still fires


def test_dropout_rate_is_respected():
    cfg = preset("static", detection_dropout=0.3)
    gt = ground_truth(cfg, BOTTLE, 0)
    hits = sum(simulate_detection(cfg, BOTTLE, f, gt) is not None for f in range(0, 1310, 5))
    assert 0.6 < hits / 262 < 0.8


# --- estimation -----------------------------------------------------------

def test_zero_noise_returns_ground_truth():
    cfg = preset("static", **ZERO_NOISE)
    gt = ground_truth(cfg, BOTTLE, 0)
    for mode in EstimatorMode:
        r = simulate_estimate(cfg, mode, gt, gt, 10)
        assert r.success and r.pose == gt


def test_failure_frame():
    cfg = preset("static", failure_frames={12})
    gt = ground_truth(cfg, BOTTLE, 0)
    r = simulate_estimate(cfg, EstimatorMode.TRACKING, gt, gt, 12)
    assert not r.success and r.pose is None


def test_iteration_counts():
    cfg = preset("static")
    gt = ground_truth(cfg, BOTTLE, 0)
    assert simulate_estimate(cfg, EstimatorMode.REGISTRATION, gt, None, 0).iterations_used == 3
    assert simulate_estimate(cfg, EstimatorMode.TRACKING, gt, gt, 1).iterations_used == 1


def test_tracking_needs_prior():
    cfg = preset("static")
    with pytest.raises(ValueError):
        simulate_estimate(cfg, EstimatorMode.TRACKING, cfg.base_pose, None, 1)


def test_full_occlusion_blocks_registration():
    cfg = preset("static", occlusion_windows=(OcclusionWindow(0, 10, 1.0),))
    assert not simulate_estimate(cfg, EstimatorMode.REGISTRATION, cfg.base_pose, None, 3).success


def test_estimates_are_deterministic():
    cfg = preset("static")
    gt = ground_truth(cfg, BOTTLE, 0)
    a = simulate_estimate(cfg, EstimatorMode.TRACKING, gt, gt, 42)
    b = simulate_estimate(cfg, EstimatorMode.TRACKING, gt, gt, 42)
    assert a == b
    c = simulate_estimate(replace(cfg, rng_seed=cfg.rng_seed + 1), EstimatorMode.TRACKING, gt, gt, 42)
    assert c != a


def test_static_position_noise_recovers_calibration():
    cfg = preset("static")
    gt = cfg.base_pose
    err = np.array([simulate_estimate(cfg, EstimatorMode.TRACKING, gt, gt, f).pose.p - gt.p for f in range(1, 1312)])
    sigma = float(np.linalg.norm(err.std(axis=0)))
    assert abs(sigma - 1.05e-3) <= 0.105e-3


def test_registration_noise_is_smaller():
    cfg = preset("static", rot_drift_sigma=0.0)
    gt = cfg.base_pose

    def spread(mode):
        e = np.array([simulate_estimate(cfg, mode, gt, gt, f).pose.p - gt.p for f in range(2000)])
        return float(np.linalg.norm(e.std(axis=0)))

    assert spread(EstimatorMode.REGISTRATION) / spread(EstimatorMode.TRACKING) == pytest.approx(1 / math.sqrt(3), rel=0.1)


def test_rotation_noise_concentrates_on_symmetry_axis():
    cfg = preset("static", rot_drift_sigma=0.0, noise_rot_sigma=2.0)
    gt = cfg.base_pose
    rv = np.array([
        (gt.orientation.conj() * simulate_estimate(cfg, EstimatorMode.TRACKING, gt, gt, f).pose.orientation).rotvec()
        for f in range(4000)
    ])
    ratio = float(np.sum(rv[:, 1] ** 2) / np.sum(rv**2))
    # sigma ratio 2 on each transverse axis: 4 / (4 + 1 + 1)
    assert ratio == pytest.approx(4 / 6, abs=0.03)


def test_occlusion_calibration_matches_target():
    cfg = preset("occlusion")
    assert expected_sigma_xyz(cfg) == pytest.approx(6.40e-3, rel=1e-12)
    assert cfg.noise_pos_sigma == OCCLUSION_BASE_SIGMA
    assert cfg.occlusion_windows == OCCLUSION_WINDOWS


def test_rng_streams_are_independent_by_purpose():
    a = rng_for(1, 2, "a").random()
    assert a == rng_for(1, 2, "a").random()
    assert a != rng_for(1, 2, "b").random()
    assert a != rng_for(1, 3, "a").random()


# --- configuration --------------------------------------------------------

def test_presets_match_table_frame_counts():
    assert preset("static").frame_count == 1312
    assert preset("dynamic").frame_count == 1097
    assert preset("occlusion").frame_count == 921
    assert not preset("dynamic").ground_truth_available


@pytest.mark.parametrize(
    "kw",
    [
        dict(frame_count=0),
        dict(detection_dropout=1.5),
        dict(noise_pos_sigma=-1.0),
        dict(occlusion_windows=(OcclusionWindow(5, 2, 0.5),)),
        dict(occlusion_windows=(OcclusionWindow(0, 5, 1.5),)),
        dict(axial_transverse_ratio=0.0),
    ],
)
def test_invalid_configs_rejected(kw):
    with pytest.raises(ValueError):
        ScenarioConfig(**kw)


def test_parse_config_overrides():
    cfg = parse_config(
        """
        kind = occlusion
        frame_count = 400
        rng_seed = 5   # comment
        occlusion_windows = 10:20:0.5, 30:40
        failure_frames = 3 4
        ground_truth_available = no
        base_position = 0.1 0 0.8
        """
    )
    assert cfg.kind is ScenarioKind.OCCLUSION
    assert cfg.frame_count == 400 and cfg.rng_seed == 5
    assert cfg.occlusion_windows == (OcclusionWindow(10, 20, 0.5), OcclusionWindow(30, 40, 1.0))
    assert cfg.failure_frames == frozenset({3, 4})
    assert not cfg.ground_truth_available
    assert cfg.base_pose.position == (0.1, 0.0, 0.8)


@pytest.mark.parametrize("text", ["bogus = 1", "frame_count = x", "occlusion_windows = 1", "ground_truth_available = maybe"])
def test_parse_config_errors(text):
    with pytest.raises(ValueError):
        parse_config(text)


def test_object_spec_validation():
    with pytest.raises(ValueError):
        ObjectSpec(height=0.0)


@given(st.floats(-0.1, 0.1), st.floats(-0.1, 0.1), st.floats(0.3, 2.0), st.floats(-math.pi, math.pi))
def test_bbox_always_inside_image(x, y, z, yaw):
    pose = Pose((x, y, z), Quat.from_axis_angle((0, 1, 0), yaw))
    bbox = project_bbox(BOTTLE, pose)
    if bbox is not None:
        u0, v0, u1, v1 = bbox
        assert 0 <= u0 < u1 <= 639 and 0 <= v0 < v1 <= 479
