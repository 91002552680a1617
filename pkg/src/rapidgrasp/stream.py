"""Latest-value pose service over HTTP.

``GET /pose`` returns the most recent complete :class:`PoseReport` as JSON.
The publisher swaps a single pre-serialized ``bytes`` snapshot, so a reader
sees either the old or the new report, never a mix.
"""
from __future__ import annotations

import json
import logging
import math
import os
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Iterator, Optional

logger = logging.getLogger(__name__)

DEFAULT_HOST = "127.0.0.1"
DEFAULT_PORT = 8077
POSE_PATH = "/pose"
STATES = ("UNINITIALIZED", "TRACKING", "LOST")
QUAT_TOLERANCE = 1e-3
STALE_AFTER = 3


class SchemaError(ValueError):
    """Report payload violates the wire schema; ``field`` names the offender."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class MalformedJSON(SchemaError):
    def __init__(self, message: str):
        super().__init__("<body>", message)


@dataclass(frozen=True)
class ObjectTrack:
    id: str
    class_label: str
    state: str
    position: Optional[tuple[float, float, float]] = None
    quaternion: Optional[tuple[float, float, float, float]] = None
    confidence: float = 0.0

    def __post_init__(self):
        if self.state not in STATES:
            raise SchemaError("state", f"unknown state {self.state!r}")
        tracking = self.state == "TRACKING"
        if tracking != (self.position is not None) or tracking != (self.quaternion is not None):
            raise SchemaError("position", "position/quaternion must be present iff state is TRACKING")
        if self.quaternion is not None:
            n = math.sqrt(sum(c * c for c in self.quaternion))
            if abs(n - 1.0) > 1e-6:
                raise SchemaError("quaternion", f"norm {n} is not 1")


@dataclass(frozen=True)
class PoseReport:
    timestamp: float = 0.0
    frame: int = 0
    objects: tuple[ObjectTrack, ...] = field(default_factory=tuple)


def report_to_dict(r: PoseReport) -> dict:
    return {
        "timestamp": float(r.timestamp),
        "frame": int(r.frame),
        "objects": [
            {
                "id": o.id,
                "class_label": o.class_label,
                "state": o.state,
                "position": None if o.position is None else [float(c) for c in o.position],
                "quaternion": None if o.quaternion is None else [float(c) for c in o.quaternion],
                "confidence": float(o.confidence),
            }
            for o in r.objects
        ],
    }


def serialize_report(r: PoseReport) -> bytes:
    # float repr is the shortest round-tripping form, so parse(serialize(r)) == r exactly
    return json.dumps(report_to_dict(r), separators=(",", ":"), allow_nan=False).encode("utf-8")


def _number(obj: dict, key: str, where: str) -> float:
    if key not in obj:
        raise SchemaError(where + key, "missing")
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise SchemaError(where + key, f"expected a finite number, got {v!r}")
    return float(v)


def _vector(obj: dict, key: str, n: int, where: str) -> Optional[tuple[float, ...]]:
    if key not in obj:
        raise SchemaError(where + key, "missing")
    v = obj[key]
    if v is None:
        return None
    if not isinstance(v, list) or len(v) != n:
        raise SchemaError(where + key, f"expected a list of {n} numbers")
    out = []
    for c in v:
        if isinstance(c, bool) or not isinstance(c, (int, float)) or not math.isfinite(c):
            raise SchemaError(where + key, f"non-numeric component {c!r}")
        out.append(float(c))
    return tuple(out)


def _string(obj: dict, key: str, where: str) -> str:
    if key not in obj:
        raise SchemaError(where + key, "missing")
    if not isinstance(obj[key], str):
        raise SchemaError(where + key, "expected a string")
    return obj[key]


def parse_report(b: bytes) -> PoseReport:
    try:
        doc = json.loads(b.decode("utf-8") if isinstance(b, (bytes, bytearray)) else b)
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise MalformedJSON(str(e)) from None
    if not isinstance(doc, dict):
        raise SchemaError("<body>", "expected a JSON object")
    ts = _number(doc, "timestamp", "")
    if "frame" not in doc:
        raise SchemaError("frame", "missing")
    frame = doc["frame"]
    if isinstance(frame, bool) or not isinstance(frame, int):
        raise SchemaError("frame", f"expected an integer, got {frame!r}")
    if "objects" not in doc or not isinstance(doc["objects"], list):
        raise SchemaError("objects", "missing or not a list")
    tracks = []
    for i, o in enumerate(doc["objects"]):
        where = f"objects[{i}]."
        if not isinstance(o, dict):
            raise SchemaError(where[:-1], "expected an object")
        state = _string(o, "state", where)
        if state not in STATES:
            raise SchemaError(where + "state", f"unknown state {state!r}")
        pos = _vector(o, "position", 3, where)
        quat = _vector(o, "quaternion", 4, where)
        if (state == "TRACKING") != (pos is not None) or (state == "TRACKING") != (quat is not None):
            raise SchemaError(where + "position", "position/quaternion must be non-null iff TRACKING")
        if quat is not None:
            n = math.sqrt(sum(c * c for c in quat))
            if abs(n - 1.0) > QUAT_TOLERANCE:
                raise SchemaError(where + "quaternion", f"norm {n:.6f} outside 1 +/- {QUAT_TOLERANCE}")
            if abs(n - 1.0) > 1e-12:
                quat = tuple(c / n for c in quat)
        conf = _number(o, "confidence", where)
        if not 0.0 <= conf <= 1.0:
            raise SchemaError(where + "confidence", f"{conf} outside [0, 1]")
        tracks.append(ObjectTrack(_string(o, "id", where), _string(o, "class_label", where), state, pos, quat, conf))
    return PoseReport(ts, frame, tuple(tracks))


# ------------------------------------------------------------------ publisher

class _Handler(BaseHTTPRequestHandler):
    server: "_SnapshotServer"

    def do_GET(self):
        if self.path.split("?", 1)[0] != POSE_PATH:
            self.send_error(404)
            return
        body = self.server.snapshot  # single reference read
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, format, *args):
        logger.debug("pose endpoint: " + format, *args)


class _SnapshotServer(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True
    snapshot: bytes


def bind_address(host: Optional[str] = None, port: Optional[int] = None) -> tuple[str, int]:
    """Resolve the bind address from arguments, then ``RAPIDGRASP_POSE_ADDR`` (host:port), then defaults."""
    env = os.environ.get("RAPIDGRASP_POSE_ADDR")
    env_host, env_port = DEFAULT_HOST, DEFAULT_PORT
    if env:
        h, _, p = env.rpartition(":")
        env_host, env_port = (h or DEFAULT_HOST), int(p)
    return (host or env_host, env_port if port is None else port)


class PosePublisher:
    """HTTP endpoint holding one latest report.  ``port=0`` picks a free port."""

    def __init__(self, host: Optional[str] = None, port: Optional[int] = None):
        host, port = bind_address(host, port)
        try:
            self._server = _SnapshotServer((host, port), _Handler)
        except OSError as e:
            raise OSError(f"cannot bind pose endpoint on {host}:{port}: {e}") from e
        self._server.snapshot = serialize_report(PoseReport())
        self._thread: Optional[threading.Thread] = None
        self.published = 0
        self.last_frame = -1

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}{POSE_PATH}"

    def start(self) -> "PosePublisher":
        self._thread = threading.Thread(target=self._server.serve_forever, kwargs={"poll_interval": 0.05},
                                        name="pose-endpoint", daemon=True)
        self._thread.start()
        return self

    def publish(self, report: PoseReport) -> None:
        if report.frame < self.last_frame:
            raise ValueError(f"report frame regressed: {report.frame} < {self.last_frame}")
        self._server.snapshot = serialize_report(report)
        self.last_frame = report.frame
        self.published += 1

    def snapshot(self) -> bytes:
        return self._server.snapshot

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=2.0)

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


def publisher_loop(
    publisher: PosePublisher,
    source: Callable[[], Optional[PoseReport]],
    rate: float = 30.0,
    duration: Optional[float] = None,
    stop: Optional[threading.Event] = None,
) -> int:
    """Publish ``source()`` every 1/rate seconds on the wall clock.  Returns the number published.

    Ticks are scheduled on an absolute grid so timer jitter does not accumulate.
    """
    if rate <= 0:
        raise ValueError("rate must be positive")
    stop = stop or threading.Event()
    period = 1.0 / rate
    start = time.monotonic()
    count = 0
    k = 0
    while not stop.is_set():
        due = start + k * period
        if duration is not None and due >= start + duration - 1e-9:
            break
        delay = due - time.monotonic()
        if delay > 0 and stop.wait(delay):
            break
        report = source()
        if report is not None:
            publisher.publish(report)
            count += 1
        k += 1
    return count


# --------------------------------------------------------------------- poller

@dataclass
class PollResult:
    report: PoseReport
    stale: bool
    ok: bool


class PosePoller:
    """Client side of the pose endpoint: keeps the last good report across transient failures."""

    def __init__(self, url: str, timeout: float = 0.5, stale_after: int = STALE_AFTER):
        self.url = url
        self.timeout = timeout
        self.stale_after = stale_after
        self.last: Optional[PoseReport] = None
        self.failures = 0

    def fetch(self) -> PoseReport:
        with urllib.request.urlopen(self.url, timeout=self.timeout) as resp:
            return parse_report(resp.read())

    def connect(self) -> PoseReport:
        try:
            self.last = self.fetch()
        except (OSError, SchemaError) as e:
            raise ConnectionError(f"pose endpoint {self.url} unreachable: {e}") from e
        self.failures = 0
        return self.last

    def poll(self) -> PollResult:
        if self.last is None:
            self.connect()
            return PollResult(self.last, False, True)
        try:
            self.last = self.fetch()
            self.failures = 0
            ok = True
        except (OSError, SchemaError) as e:
            self.failures += 1
            logger.warning("pose poll failed (%d in a row): %s", self.failures, e)
            ok = False
        return PollResult(self.last, self.failures >= self.stale_after, ok)

    @property
    def stale(self) -> bool:
        return self.failures >= self.stale_after


def poller_loop(
    poller: PosePoller,
    rate: float = 30.0,
    duration: Optional[float] = None,
    stop: Optional[threading.Event] = None,
) -> Iterator[PollResult]:
    """Yield one :class:`PollResult` per tick at ``rate`` Hz on the wall clock."""
    if rate <= 0:
        raise ValueError("rate must be positive")
    stop = stop or threading.Event()
    poller.connect()
    period = 1.0 / rate
    start = time.monotonic()
    k = 0
    while not stop.is_set():
        due = start + k * period
        if duration is not None and due >= start + duration - 1e-9:
            return
        delay = due - time.monotonic()
        if delay > 0 and stop.wait(delay):
            return
        yield poller.poll()
        k += 1
