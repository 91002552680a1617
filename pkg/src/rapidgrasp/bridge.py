"""Joint-command datagrams, the receiving bridge and the simulated robot.

Wire layout of one ``JointCommandPacket`` (little-endian, no padding)::

    offset  size  field
    0       4     magic        b"G1JC"
    4       1     version      uint8, = 1
    5       1     channel      uint8: 0 rt/arm_sdk, 1 rt/dex3/left/cmd, 2 rt/dex3/right/cmd
    6       4     seq          uint32, per-channel, increasing
    10      1     joint_count  uint8 (n)
    11      4n    normalized   n x float32, each in [0, 1]
    11+4n   4     kp           float32
    15+4n   4     kd           float32

Total length is 19 + 4n bytes.
"""
from __future__ import annotations

import logging
import math
import socket
import struct
import threading
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .kinematics import KinematicChain, fk_matrix
from .se3 import Pose, Quat, compose, inverse

logger = logging.getLogger(__name__)

MAGIC = b"G1JC"
VERSION = 1
DEFAULT_PORT = 8078
_HEADER = struct.Struct("<4sBBIB")
_GAINS = struct.Struct("<ff")
HEADER_SIZE = _HEADER.size
PACKET_OVERHEAD = _HEADER.size + _GAINS.size

CHANNEL_NAMES = {0: "rt/arm_sdk", 1: "rt/dex3/left/cmd", 2: "rt/dex3/right/cmd"}
ARM, LEFT_HAND, RIGHT_HAND = 0, 1, 2

KP = 60.0
KD = 1.5
VELOCITY_LIMIT = 2.0  # rad/s
SUBSTEP = 1.0 / 240.0
GRIPPER_SLEW = 2.0  # closure units per second
ATTACH_THRESHOLD = 0.8
CAPTURE_RADIUS = 0.03  # m, palm to object axis

# Dex3 hands have 7 joints; the ranges below are representative, and only
# their normalized average drives the simulated closure.
HAND_LIMITS = [(-1.05, 1.05), (-0.72, 0.92), (0.0, 1.74), (-1.57, 0.0), (-1.74, 0.0), (-1.57, 0.0), (-1.74, 0.0)]


class PacketError(ValueError):
    field = "packet"

    def __init__(self, message: str):
        super().__init__(f"{self.field}: {message}")


class BadMagic(PacketError):
    field = "magic"


class UnsupportedVersion(PacketError):
    field = "version"


class BadChannel(PacketError):
    field = "channel"


class LengthMismatch(PacketError):
    field = "joint_count"


class BadValue(PacketError):
    field = "normalized"


@dataclass(frozen=True)
class JointCommandPacket:
    channel: int
    seq: int
    normalized: tuple[float, ...]
    kp: float = KP
    kd: float = KD
    version: int = VERSION
    magic: bytes = MAGIC


def encode_packet(p: JointCommandPacket) -> bytes:
    """Serialize ``p``; normalized values are clamped into [0, 1] (sender contract)."""
    if p.channel not in CHANNEL_NAMES:
        raise BadChannel(f"unknown channel {p.channel}")
    if not 0 <= p.seq <= 0xFFFFFFFF:
        raise ValueError(f"seq {p.seq} does not fit in uint32")
    n = len(p.normalized)
    if n > 255:
        raise LengthMismatch(f"{n} joints do not fit in uint8")
    vals = []
    for v in p.normalized:
        if not math.isfinite(v):
            raise BadValue(f"non-finite value {v}")
        vals.append(min(1.0, max(0.0, float(v))))
    return _HEADER.pack(p.magic, p.version, p.channel, p.seq, n) + struct.pack(f"<{n}f", *vals) + _GAINS.pack(p.kp, p.kd)


def decode_packet(b: bytes) -> JointCommandPacket:
    """Parse a datagram or raise a :class:`PacketError` naming the bad field.

    Normalized values are not range-checked here; the bridge clamps after
    denormalizing, so hostile values can never leave the joint limits.
    """
    if len(b) < HEADER_SIZE:
        raise LengthMismatch(f"datagram of {len(b)} bytes is shorter than the {HEADER_SIZE}-byte header")
    magic, version, channel, seq, n = _HEADER.unpack_from(b)
    if magic != MAGIC:
        raise BadMagic(f"expected {MAGIC!r}, got {magic!r}")
    if version != VERSION:
        raise UnsupportedVersion(f"version {version} not supported")
    if channel not in CHANNEL_NAMES:
        raise BadChannel(f"unknown channel {channel}")
    if len(b) != PACKET_OVERHEAD + 4 * n:
        raise LengthMismatch(f"{n} joints need {PACKET_OVERHEAD + 4 * n} bytes, got {len(b)}")
    vals = struct.unpack_from(f"<{n}f", b, HEADER_SIZE)
    kp, kd = _GAINS.unpack_from(b, HEADER_SIZE + 4 * n)
    if not all(math.isfinite(v) for v in vals):
        raise BadValue("non-finite joint value")
    if not (math.isfinite(kp) and math.isfinite(kd) and kp >= 0 and kd >= 0):
        raise PacketError(f"gains must be finite and non-negative, got kp={kp} kd={kd}")
    return JointCommandPacket(channel, seq, tuple(vals), kp, kd, version, magic)


def denormalize(normalized: Sequence[float], limits: Sequence[tuple[float, float]]) -> np.ndarray:
    """theta = theta_min + n * (theta_max - theta_min), clamped into the limits."""
    n = np.asarray(normalized, dtype=float)
    if len(n) != len(limits):
        raise ValueError(f"{len(n)} values for {len(limits)} joints")
    lo = np.array([a for a, _ in limits])
    hi = np.array([b for _, b in limits])
    return np.clip(lo + n * (hi - lo), lo, hi)


# ---------------------------------------------------------------- robot plant

@dataclass
class RobotState:
    """Arm joints under PD control plus a kinematic gripper and one free object."""

    chain: KinematicChain
    position: np.ndarray
    velocity: np.ndarray
    target: np.ndarray
    kp: np.ndarray
    kd: np.ndarray
    gripper_closure: float = 0.0
    gripper_target: float = 0.0
    attached_object: Optional[str] = None
    object_id: str = "object"
    object_pose: Pose = Pose()
    object_in_palm: Optional[Pose] = None
    time: float = 0.0

    @classmethod
    def at_rest(cls, chain: KinematicChain, q: Optional[Sequence[float]] = None, object_pose: Pose = Pose(),
                object_id: str = "object") -> "RobotState":
        q0 = chain.home_config() if q is None else np.asarray(q, dtype=float)
        n = chain.dof
        return cls(chain, q0.copy(), np.zeros(n), q0.copy(), np.full(n, KP), np.full(n, KD),
                   object_pose=object_pose, object_id=object_id)

    def palm_pose(self) -> Pose:
        R, p = fk_matrix(self.chain, self.position)
        return Pose(tuple(p), Quat.from_matrix(R))

    def copy(self) -> "RobotState":
        return replace(self, position=self.position.copy(), velocity=self.velocity.copy(),
                       target=self.target.copy(), kp=self.kp.copy(), kd=self.kd.copy())


def _axis_distance(palm: np.ndarray, obj: Pose) -> float:
    """Distance from the palm point to the object's symmetry axis (body Y)."""
    axis = obj.orientation.rotate((0.0, 1.0, 0.0))
    d = palm - obj.p
    return float(np.linalg.norm(d - np.dot(d, axis) * axis))


def robot_step(state: RobotState, dt: float = SUBSTEP) -> RobotState:
    """Advance the plant by ``dt``: unit-inertia PD, velocity clamp, limit clamp, gripper slew, attachment."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    s = state.copy()
    lo, hi = s.chain.lower, s.chain.upper
    acc = s.kp * (s.target - s.position) - s.kd * s.velocity
    v = np.clip(s.velocity + acc * dt, -VELOCITY_LIMIT, VELOCITY_LIMIT)
    q = s.position + v * dt
    hit = (q < lo) | (q > hi)
    q = np.clip(q, lo, hi)
    v[hit] = 0.0
    s.position, s.velocity = q, v

    before = s.gripper_closure
    step = GRIPPER_SLEW * dt
    s.gripper_closure = before + max(-step, min(step, s.gripper_target - before))
    palm = s.palm_pose()
    if s.attached_object is None:
        if before < ATTACH_THRESHOLD <= s.gripper_closure and _axis_distance(palm.p, s.object_pose) <= CAPTURE_RADIUS:
            s.attached_object = s.object_id
            s.object_in_palm = compose(inverse(palm), s.object_pose)
    else:
        if s.gripper_closure < ATTACH_THRESHOLD:
            s.attached_object = None
            s.object_in_palm = None
        else:
            s.object_pose = compose(palm, s.object_in_palm)
    s.time = state.time + dt
    return s


@dataclass
class TraceSample:
    time: float
    stage: str
    position: np.ndarray
    velocity: np.ndarray
    gripper: float
    attached: bool
    object_z: float
    tool: np.ndarray


class RobotSim:
    """Owns a :class:`RobotState` and records every substep for the safety and outcome checks."""

    def __init__(self, state: RobotState, record: bool = True):
        self.state = state
        self.record = record
        self.trace: list[TraceSample] = []
        self.stage = ""
        self._lock = threading.Lock()

    def set_arm_targets(self, theta: np.ndarray, kp: float, kd: float) -> None:
        with self._lock:
            self.state.target = np.asarray(theta, dtype=float).copy()
            self.state.kp = np.full(self.state.chain.dof, kp)
            self.state.kd = np.full(self.state.chain.dof, kd)

    def set_hand_targets(self, theta: np.ndarray, limits: Sequence[tuple[float, float]]) -> None:
        lo = np.array([a for a, _ in limits])
        hi = np.array([b for _, b in limits])
        with self._lock:
            self.state.gripper_target = float(np.mean((np.asarray(theta) - lo) / (hi - lo)))

    def step(self, dt: float = SUBSTEP, n: int = 1) -> None:
        for _ in range(n):
            with self._lock:
                self.state = robot_step(self.state, dt)
                st = self.state
            if self.record:
                self.trace.append(
                    TraceSample(st.time, self.stage, st.position.copy(), st.velocity.copy(), st.gripper_closure,
                                st.attached_object is not None, st.object_pose.position[2], st.palm_pose().p)
                )


def safety_violations(trace: Sequence[TraceSample], chain: KinematicChain, vmax: float = VELOCITY_LIMIT) -> int:
    """Count substeps where any joint exceeds ``vmax`` or leaves its limits."""
    lo, hi = chain.lower, chain.upper
    bad = 0
    for s in trace:
        if np.any(np.abs(s.velocity) > vmax) or np.any(s.position < lo) or np.any(s.position > hi):
            bad += 1
    return bad


def grasp_outcome(trace: Sequence[TraceSample], lift_stage: str = "Lift", release_stage: str = "Release",
                  threshold: float = 0.05) -> dict:
    """Success iff the object is attached during Lift and rises more than ``threshold`` before Release."""
    if not trace:
        return {"success": False, "lift_height": 0.0}
    rest_z = trace[0].object_z
    attached_in_lift = False
    peak = 0.0
    for s in trace:
        if s.stage == release_stage:
            break
        if s.stage == lift_stage and s.attached:
            attached_in_lift = True
        if s.attached:
            peak = max(peak, s.object_z - rest_z)
    return {"success": bool(attached_in_lift and peak > threshold), "lift_height": float(peak)}


# --------------------------------------------------------------------- bridge

@dataclass
class BridgeCounters:
    applied: dict = field(default_factory=lambda: {c: 0 for c in CHANNEL_NAMES})
    dropped_stale: int = 0
    malformed: int = 0


class Bridge:
    """Receives command datagrams and forwards denormalized, clamped targets to the robot."""

    def __init__(self, robot: RobotSim, arm_limits: Sequence[tuple[float, float]],
                 hand_limits: Sequence[tuple[float, float]] = HAND_LIMITS):
        self.robot = robot
        self.limits = {ARM: list(arm_limits), LEFT_HAND: list(hand_limits), RIGHT_HAND: list(hand_limits)}
        self.last_seq: dict[int, int] = {}
        self.counters = BridgeCounters()
        self.right_hand_target: Optional[np.ndarray] = None
        self.left_hand_target: Optional[np.ndarray] = None

    def handle_datagram(self, data: bytes) -> bool:
        """Apply one datagram.  Returns True if it produced a command."""
        try:
            pkt = decode_packet(data)
        except PacketError as e:
            self.counters.malformed += 1
            logger.debug("malformed datagram: %s", e)
            return False
        limits = self.limits[pkt.channel]
        if len(pkt.normalized) != len(limits):
            self.counters.malformed += 1
            logger.debug("%s expects %d joints, got %d", CHANNEL_NAMES[pkt.channel], len(limits), len(pkt.normalized))
            return False
        last = self.last_seq.get(pkt.channel)
        if last is not None and pkt.seq <= last:
            self.counters.dropped_stale += 1
            return False
        self.last_seq[pkt.channel] = pkt.seq
        theta = denormalize(pkt.normalized, limits)
        if pkt.channel == ARM:
            self.robot.set_arm_targets(theta, pkt.kp, pkt.kd)
        elif pkt.channel == RIGHT_HAND:
            self.right_hand_target = theta
            self.robot.set_hand_targets(theta, limits)
        else:
            self.left_hand_target = theta
        self.counters.applied[pkt.channel] += 1
        return True

    def report(self) -> dict:
        return {
            "applied": {CHANNEL_NAMES[c]: n for c, n in self.counters.applied.items()},
            "dropped_stale": self.counters.dropped_stale,
            "malformed": self.counters.malformed,
        }


def open_bridge_socket(host: str = "127.0.0.1", port: int = DEFAULT_PORT) -> socket.socket:
    sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    sock.bind((host, port))
    return sock


def drain(sock: socket.socket, bridge: Bridge, expect: int = 0, timeout: float = 1.0) -> int:
    """Handle queued datagrams; block until at least ``expect`` have arrived (lock-step mode)."""
    got = 0
    sock.settimeout(timeout)
    while got < expect:
        try:
            data = sock.recv(65535)
        except socket.timeout:
            raise TimeoutError(f"bridge expected {expect} datagrams, received {got}") from None
        bridge.handle_datagram(data)
        got += 1
    sock.setblocking(False)
    try:
        while True:
            try:
                data = sock.recv(65535)
            except (BlockingIOError, InterruptedError):
                break
            bridge.handle_datagram(data)
            got += 1
    finally:
        sock.setblocking(True)
    return got


def bridge_loop(sock: socket.socket, bridge: Bridge, stop: threading.Event,
                on_datagram: Optional[Callable[[bytes], None]] = None) -> None:
    """Receive until ``stop`` is set (wall-clock mode).  Input errors are counted, never raised."""
    sock.settimeout(0.05)
    while not stop.is_set():
        try:
            data = sock.recv(65535)
        except socket.timeout:
            continue
        except OSError:
            if stop.is_set():
                break
            raise
        if on_datagram is not None:
            on_datagram(data)
        bridge.handle_datagram(data)


def robot_loop(robot: RobotSim, stop: threading.Event, dt: float = SUBSTEP) -> None:
    """Step the plant on the wall clock at 1/dt Hz until ``stop`` is set."""
    import time

    start = time.monotonic()
    k = 0
    while not stop.is_set():
        due = start + k * dt
        delay = due - time.monotonic()
        if delay > 0 and stop.wait(delay):
            break
        robot.step(dt)
        k += 1


class CommandSender:
    """Sender side: turns joint vectors into sequenced datagrams on each channel."""

    def __init__(self, sock: socket.socket, address: tuple[str, int], kp: float = KP, kd: float = KD):
        self.sock = sock
        self.address = address
        self.kp = kp
        self.kd = kd
        self.seq = {c: 0 for c in CHANNEL_NAMES}
        self.sent = 0

    def send(self, channel: int, normalized: Sequence[float]) -> bytes:
        self.seq[channel] += 1
        data = encode_packet(JointCommandPacket(channel, self.seq[channel], tuple(normalized), self.kp, self.kd))
        self.sock.sendto(data, self.address)
        self.sent += 1
        return data
