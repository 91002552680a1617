"""Synthetic camera, detector and pose estimator.

Stands in for the RGB-D camera, the YOLO detector and the render-and-compare
pose estimator.  Everything here is a pure function of (config, frame): all
randomness comes from a Philox generator keyed by (seed, frame, purpose), so
two runs of the same config produce bit-identical detections and estimates.

Poses are expressed in the camera optical frame (x right, y down, z forward).
An upright object has its symmetry axis along its own body Y axis.
"""
from __future__ import annotations

import configparser
import enum
import math
import zlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .se3 import Pose, Quat, compose, translation

IMAGE_WIDTH = 640
IMAGE_HEIGHT = 480
FX = FY = 600.0
CX, CY = 320.0, 240.0

DETECTION_PERIOD = 5
REGISTRATION_ITERATIONS = 3
TRACKING_ITERATIONS = 1
OCCLUSION_DETECT_LIMIT = 0.5
OCCLUSION_NOISE_GAIN = 5.0


@dataclass(frozen=True)
class ObjectSpec:
    class_label: str = "bottle"
    height: float = 0.22
    diameter: float = 0.06

    def __post_init__(self):
        if self.height <= 0 or self.diameter <= 0:
            raise ValueError("object height and diameter must be positive")


BOTTLE = ObjectSpec()


class ScenarioKind(str, enum.Enum):
    STATIC = "static"
    DYNAMIC = "dynamic"
    OCCLUSION = "occlusion"


class EstimatorMode(str, enum.Enum):
    REGISTRATION = "registration"
    TRACKING = "tracking"


@dataclass(frozen=True)
class OcclusionWindow:
    start: int
    end: int  # exclusive
    fraction: float

    def covers(self, frame: int) -> bool:
        return self.start <= frame < self.end


@dataclass(frozen=True)
class ScenarioConfig:
    kind: ScenarioKind = ScenarioKind.STATIC
    frame_count: int = 1312
    frame_rate: float = 30.0
    noise_pos_sigma: float = 1.05e-3 / math.sqrt(3.0)  # per axis, meters
    noise_rot_sigma: float = 0.5  # white axial jitter, degrees
    rot_drift_sigma: float = 0.0  # slow drift about the symmetry axis, degrees
    axial_transverse_ratio: float = 2.0  # sigma ratio, symmetry axis vs each other axis (jitter and drift)
    detection_dropout: float = 0.0
    occlusion_windows: tuple[OcclusionWindow, ...] = ()
    failure_frames: frozenset[int] = frozenset()
    failure_rate: float = 0.0
    rng_seed: int = 0
    motion_amplitude: float = 0.0  # meters
    motion_period: float = 4.0  # seconds
    motion_rot_amplitude: float = 0.0  # degrees, about the symmetry axis
    ground_truth_available: bool = True
    base_pose: Pose = field(default_factory=lambda: translation(0.0, 0.0, 0.7))

    def __post_init__(self):
        object.__setattr__(self, "kind", ScenarioKind(self.kind))
        if self.frame_count <= 0:
            raise ValueError("frame_count must be positive")
        if self.frame_rate <= 0:
            raise ValueError("frame_rate must be positive")
        for name in ("detection_dropout", "failure_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be a probability, got {v}")
        for w in self.occlusion_windows:
            if not (0 <= w.start < w.end <= self.frame_count):
                raise ValueError(f"occlusion window {w} outside [0, {self.frame_count})")
            if not 0.0 <= w.fraction <= 1.0:
                raise ValueError(f"occluded fraction must lie in [0, 1], got {w.fraction}")
        if min(self.noise_pos_sigma, self.noise_rot_sigma, self.rot_drift_sigma) < 0:
            raise ValueError("noise sigmas must be non-negative")
        if self.axial_transverse_ratio <= 0:
            raise ValueError("axial_transverse_ratio must be positive")
        object.__setattr__(self, "failure_frames", frozenset(self.failure_frames))

    def occlusion(self, frame: int) -> float:
        return max((w.fraction for w in self.occlusion_windows if w.covers(frame)), default=0.0)


def preset(kind: str | ScenarioKind, **overrides) -> ScenarioConfig:
    """Scenario presets calibrated to the three tracking-table columns."""
    kind = ScenarioKind(kind)
    if kind is ScenarioKind.STATIC:
        cfg = ScenarioConfig(kind=kind, frame_count=1312, rng_seed=1312, rot_drift_sigma=53.0)
    elif kind is ScenarioKind.DYNAMIC:
        cfg = ScenarioConfig(
            kind=kind,
            frame_count=1097,
            rng_seed=1097,
            rot_drift_sigma=45.0,
            motion_amplitude=0.08,
            motion_period=4.0,
            motion_rot_amplitude=150.0,
            ground_truth_available=False,
        )
    else:
        cfg = ScenarioConfig(
            kind=kind,
            frame_count=921,
            rng_seed=921,
            noise_pos_sigma=OCCLUSION_BASE_SIGMA,
            rot_drift_sigma=42.0,
            occlusion_windows=OCCLUSION_WINDOWS,
        )
    return replace(cfg, **overrides) if overrides else cfg


# Partial-occlusion timeline for 921 frames: long half-occluded stretches
# (detector still fires) and two heavier 2 s windows where only the tracker
# carries the object.  Noise scales by (1 + 5 f) inside a window.
OCCLUSION_WINDOWS = (
    OcclusionWindow(60, 300, 0.5),
    OcclusionWindow(300, 360, 0.7),
    OcclusionWindow(360, 600, 0.5),
    OcclusionWindow(640, 700, 0.7),
    OcclusionWindow(700, 900, 0.5),
)
OCCLUSION_TARGET_SIGMA_XYZ = 6.40e-3


def expected_sigma_xyz(cfg: ScenarioConfig) -> float:
    """Isotropic-equivalent position sigma (meters) the config injects on average."""
    gains = [(1.0 + OCCLUSION_NOISE_GAIN * cfg.occlusion(f)) ** 2 for f in range(cfg.frame_count)]
    return math.sqrt(3.0 * float(np.mean(gains))) * cfg.noise_pos_sigma


def _occlusion_base_sigma() -> float:
    probe = ScenarioConfig(frame_count=921, noise_pos_sigma=1.0, occlusion_windows=OCCLUSION_WINDOWS)
    return OCCLUSION_TARGET_SIGMA_XYZ / expected_sigma_xyz(probe)


OCCLUSION_BASE_SIGMA = _occlusion_base_sigma()


def rng_for(seed: int, frame: int, purpose: str) -> np.random.Generator:
    """Counter-based generator keyed by (seed, frame, purpose)."""
    tag = zlib.crc32(purpose.encode())
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed & 0xFFFFFFFF, frame, tag])))


# ---------------------------------------------------------------- ground truth

def ground_truth(cfg: ScenarioConfig, obj: ObjectSpec, frame: int) -> Pose:
    if not 0 <= frame < cfg.frame_count:
        raise IndexError(f"frame {frame} outside [0, {cfg.frame_count})")
    if cfg.kind is not ScenarioKind.DYNAMIC:
        return cfg.base_pose
    phase = 2.0 * math.pi * frame / (cfg.motion_period * cfg.frame_rate)
    # lateral sweep in the camera x direction, with a yaw about the symmetry axis
    offset = translation(cfg.motion_amplitude * math.sin(phase), 0.0, 0.0)
    yaw = Quat.from_axis_angle((0.0, 1.0, 0.0), math.radians(cfg.motion_rot_amplitude) * math.sin(phase))
    return compose(offset, compose(cfg.base_pose, Pose(orientation=yaw)))


# ------------------------------------------------------------------- detection

@dataclass(frozen=True)
class Detection:
    frame: int
    bbox: tuple[float, float, float, float]
    confidence: float
    class_label: str

    def __post_init__(self):
        u0, v0, u1, v1 = self.bbox
        if not (u0 < u1 and v0 < v1):
            raise ValueError(f"degenerate bbox {self.bbox}")
        if u0 < 0 or v0 < 0 or u1 > IMAGE_WIDTH - 1 or v1 > IMAGE_HEIGHT - 1:
            raise ValueError(f"bbox {self.bbox} outside the image")


def project(points_cam: np.ndarray) -> np.ndarray:
    """Pinhole projection of (N, 3) camera-frame points to (N, 2) pixels."""
    z = points_cam[:, 2]
    return np.column_stack([FX * points_cam[:, 0] / z + CX, FY * points_cam[:, 1] / z + CY])


def cylinder_outline(obj: ObjectSpec, n: int = 64) -> np.ndarray:
    """Points on the rims of the bounding cylinder, in the object frame."""
    a = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
    r = obj.diameter / 2.0
    rim = np.column_stack([r * np.cos(a), np.zeros(n), r * np.sin(a)])
    top, bottom = rim.copy(), rim.copy()
    top[:, 1] = -obj.height / 2.0
    bottom[:, 1] = obj.height / 2.0
    return np.vstack([top, bottom])


def project_bbox(obj: ObjectSpec, pose_cam: Pose) -> Optional[tuple[float, float, float, float]]:
    pts = cylinder_outline(obj) @ pose_cam.orientation.matrix().T + pose_cam.p
    if np.any(pts[:, 2] <= 1e-3):
        return None
    uv = project(pts)
    u0 = max(0.0, float(uv[:, 0].min()))
    v0 = max(0.0, float(uv[:, 1].min()))
    u1 = min(IMAGE_WIDTH - 1.0, float(uv[:, 0].max()))
    v1 = min(IMAGE_HEIGHT - 1.0, float(uv[:, 1].max()))
    if u0 >= u1 or v0 >= v1:
        return None
    return (u0, v0, u1, v1)


def simulate_detection(cfg: ScenarioConfig, obj: ObjectSpec, frame: int, gt: Pose) -> Optional[Detection]:
    if frame % DETECTION_PERIOD != 0:
        return None
    if cfg.occlusion(frame) > OCCLUSION_DETECT_LIMIT:
        return None
    rng = rng_for(cfg.rng_seed, frame, "detection")
    dropped, confidence = rng.random() < cfg.detection_dropout, rng.uniform(0.75, 1.0)
    if dropped:
        return None
    bbox = project_bbox(obj, gt)
    if bbox is None:
        return None
    return Detection(frame, bbox, float(confidence), obj.class_label)


# ------------------------------------------------------------------ estimation

@dataclass(frozen=True)
class EstimateResult:
    success: bool
    pose: Optional[Pose]
    iterations_used: int


def _drift(seed: int, axis: int, frame: int, frame_rate: float, sigma_deg: float, n_terms: int = 16) -> float:
    """Band-limited drift: a seeded sum of slow sinusoids with per-frame std ``sigma_deg``."""
    if sigma_deg == 0.0:
        return 0.0
    rng = rng_for(seed, axis, "rotation-drift")
    freqs = rng.uniform(0.02, 0.15, n_terms)
    phases = rng.uniform(0.0, 2.0 * math.pi, n_terms)
    t = frame / frame_rate
    amp = sigma_deg * math.sqrt(2.0 / n_terms)
    return math.radians(amp * float(np.sum(np.sin(2.0 * math.pi * freqs * t + phases))))


def estimator_noise(cfg: ScenarioConfig, mode: EstimatorMode, frame: int) -> tuple[np.ndarray, np.ndarray]:
    """(position offset in camera frame [m], body-frame rotation vector [rad]) for one estimate."""
    rng = rng_for(cfg.rng_seed, frame, f"estimate-{mode.value}")
    scale = 1.0 / math.sqrt(REGISTRATION_ITERATIONS) if mode is EstimatorMode.REGISTRATION else 1.0
    pos_sigma = cfg.noise_pos_sigma * scale * (1.0 + OCCLUSION_NOISE_GAIN * cfg.occlusion(frame))
    axial = math.radians(cfg.noise_rot_sigma) * scale
    transverse = axial / cfg.axial_transverse_ratio
    dp = rng.normal(0.0, 1.0, 3) * pos_sigma
    rv = rng.normal(0.0, 1.0, 3) * np.array([transverse, axial, transverse])
    d_axial = cfg.rot_drift_sigma
    d_trans = d_axial / cfg.axial_transverse_ratio
    drift = [_drift(cfg.rng_seed, i, frame, cfg.frame_rate, s) for i, s in enumerate((d_trans, d_axial, d_trans))]
    return dp, rv + np.array(drift)


def estimate_fails(cfg: ScenarioConfig, frame: int) -> bool:
    if frame in cfg.failure_frames:
        return True
    if cfg.failure_rate > 0.0:
        return bool(rng_for(cfg.rng_seed, frame, "failure").random() < cfg.failure_rate)
    return False


def simulate_estimate(
    cfg: ScenarioConfig,
    mode: EstimatorMode,
    gt: Pose,
    prior: Optional[Pose],
    frame: int,
) -> EstimateResult:
    mode = EstimatorMode(mode)
    if mode is EstimatorMode.TRACKING:
        if prior is None:
            raise ValueError("tracking mode needs a prior pose")
        if estimate_fails(cfg, frame):
            return EstimateResult(False, None, TRACKING_ITERATIONS)
        iters = TRACKING_ITERATIONS
    else:
        if cfg.occlusion(frame) >= 1.0:
            return EstimateResult(False, None, REGISTRATION_ITERATIONS)
        iters = REGISTRATION_ITERATIONS
    dp, rv = estimator_noise(cfg, mode, frame)
    pose = Pose(tuple(gt.p + dp), gt.orientation * Quat.from_rotvec(rv))
    return EstimateResult(True, pose, iters)


EstimatorFn = Callable[[EstimatorMode, Optional[Pose], "object", int], EstimateResult]


def make_estimator(cfg: ScenarioConfig, truth: Callable[[int], Pose]) -> EstimatorFn:
    """Bind the simulated estimator to a ground-truth source for the tracker."""

    def estimator(mode, prior, roi, frame):
        return simulate_estimate(cfg, mode, truth(frame), prior, frame)

    return estimator


# ---------------------------------------------------------------- config files

def _parse_windows(text: str) -> tuple[OcclusionWindow, ...]:
    out = []
    for chunk in text.replace(";", ",").split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.split(":")
        if len(parts) not in (2, 3):
            raise ValueError(f"occlusion window {chunk!r} must be start:end[:fraction]")
        frac = float(parts[2]) if len(parts) == 3 else 1.0
        out.append(OcclusionWindow(int(parts[0]), int(parts[1]), frac))
    return tuple(out)


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_floats(text: str, n: int) -> tuple[float, ...]:
    vals = tuple(float(v) for v in text.replace(",", " ").split())
    if len(vals) != n:
        raise ValueError(f"expected {n} numbers, got {text!r}")
    return vals


def load_config(path: str | Path, base: Optional[ScenarioConfig] = None) -> ScenarioConfig:
    """Read a ``key = value`` scenario file.  Keys not given keep the values of ``base``.

    See ``docs/formats.md`` for the schema.
    """
    text = Path(path).read_text()
    return parse_config(text, base)


def parse_config(text: str, base: Optional[ScenarioConfig] = None) -> ScenarioConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.optionxform = str
    cp.read_string("[scenario]\n" + text)
    items = dict(cp["scenario"])
    if base is None:
        base = preset(items["kind"]) if "kind" in items else ScenarioConfig()
    known = {f.name for f in fields(ScenarioConfig)}
    kw = {}
    for key, raw in items.items():
        if key not in known and key not in ("base_position", "base_quaternion"):
            raise ValueError(f"unknown scenario key {key!r}")
        if key == "kind":
            kw[key] = ScenarioKind(raw.strip())
        elif key in ("frame_count", "rng_seed"):
            kw[key] = int(raw)
        elif key == "occlusion_windows":
            kw[key] = _parse_windows(raw)
        elif key == "failure_frames":
            kw[key] = frozenset(int(v) for v in raw.replace(",", " ").split())
        elif key == "ground_truth_available":
            kw[key] = _parse_bool(raw)
        elif key in ("base_position", "base_quaternion"):
            continue
        else:
            kw[key] = float(raw)
    if "base_position" in items or "base_quaternion" in items:
        pos = _parse_floats(items["base_position"], 3) if "base_position" in items else base.base_pose.position
        quat = (
            Quat(*_parse_floats(items["base_quaternion"], 4))
            if "base_quaternion" in items
            else base.base_pose.orientation
        )
        kw["base_pose"] = Pose(pos, quat)
    return replace(base, **kw)


def windows_frames(windows: Sequence[OcclusionWindow]) -> int:
    return sum(w.end - w.start for w in windows)
