import json
import math
import threading
import time

import pytest
from hypothesis import given
from hypothesis import strategies as st

from rapidgrasp.stream import (
    MalformedJSON,
    ObjectTrack,
    PosePoller,
    PosePublisher,
    PoseReport,
    SchemaError,
    bind_address,
    parse_report,
    poller_loop,
    publisher_loop,
    serialize_report,
)

coord = st.floats(-100, 100, allow_nan=False, allow_infinity=False)


@st.composite
def tracks(draw):
    state = draw(st.sampled_from(["UNINITIALIZED", "TRACKING", "LOST"]))
    pos = quat = None
    if state == "TRACKING":
        pos = draw(st.tuples(coord, coord, coord))
        raw = draw(st.tuples(coord, coord, coord, coord).filter(lambda q: sum(c * c for c in q) > 1e-2))
        n = math.sqrt(sum(c * c for c in raw))
        quat = tuple(c / n for c in raw)
    return ObjectTrack(
        draw(st.text(max_size=8)),
        draw(st.sampled_from(["bottle", "window", "cup"])),
        state,
        pos,
        quat,
        draw(st.floats(0.0, 1.0)),
    )


reports = st.builds(
    PoseReport,
    st.floats(0, 1e6, allow_nan=False),
    st.integers(0, 2**40),
    st.lists(tracks(), max_size=4).map(tuple),
)


# --- codec ------------------------------------------------------------------

def test_empty_report_bytes():
    assert serialize_report(PoseReport()) == b'{"timestamp":0.0,"frame":0,"objects":[]}'


def test_identity_pose_fields():
    r = PoseReport(0.0, 0, (ObjectTrack("b", "bottle", "TRACKING", (0.0, 0.0, 0.0), (1.0, 0.0, 0.0, 0.0), 1.0),))
    o = json.loads(serialize_report(r))["objects"][0]
    assert o["position"] == [0, 0, 0] and o["quaternion"] == [1, 0, 0, 0]


def test_lost_object_has_null_pose():
    r = PoseReport(0.0, 3, (ObjectTrack("b", "bottle", "LOST"),))
    o = json.loads(serialize_report(r))["objects"][0]
    assert o["position"] is None and o["quaternion"] is None


@given(reports)
def test_round_trip_exact(r):
    assert parse_report(serialize_report(r)) == r


def test_truncated_payload():
    b = serialize_report(PoseReport(1.0, 2, (ObjectTrack("b", "bottle", "LOST"),)))
    with pytest.raises(MalformedJSON):
        parse_report(b[:-5])


def test_short_quaternion_rejected():
    doc = {"timestamp": 0.0, "frame": 1, "objects": [
        {"id": "b", "class_label": "bottle", "state": "TRACKING", "position": [0, 0, 0],
         "quaternion": [0.5, 0, 0, 0], "confidence": 0.9}]}
    with pytest.raises(SchemaError) as e:
        parse_report(json.dumps(doc).encode())
    assert e.value.field == "objects[0].quaternion"


def test_near_unit_quaternion_renormalized():
    doc = {"timestamp": 0.0, "frame": 1, "objects": [
        {"id": "b", "class_label": "bottle", "state": "TRACKING", "position": [0, 0, 0],
         "quaternion": [1.0005, 0, 0, 0], "confidence": 0.9}]}
    assert parse_report(json.dumps(doc).encode()).objects[0].quaternion == (1.0, 0.0, 0.0, 0.0)


@pytest.mark.parametrize(
    "mutate,field",
    [
        (lambda d: d.pop("frame"), "frame"),
        (lambda d: d.__setitem__("frame", 1.5), "frame"),
        (lambda d: d.__setitem__("timestamp", "x"), "timestamp"),
        (lambda d: d["objects"][0].__setitem__("state", "GONE"), "objects[0].state"),
        (lambda d: d["objects"][0].__setitem__("position", None), "objects[0].position"),
        (lambda d: d["objects"][0].__setitem__("position", [0, 0]), "objects[0].position"),
        (lambda d: d["objects"][0].__setitem__("confidence", 2.0), "objects[0].confidence"),
        (lambda d: d["objects"][0].pop("id"), "objects[0].id"),
    ],
)
def test_schema_errors_name_the_field(mutate, field):
    d = {"timestamp": 0.0, "frame": 1, "objects": [
        {"id": "b", "class_label": "bottle", "state": "TRACKING", "position": [0, 0, 0],
         "quaternion": [1, 0, 0, 0], "confidence": 0.9}]}
    mutate(d)
    with pytest.raises(SchemaError) as e:
        parse_report(json.dumps(d).encode())
    assert e.value.field == field


@given(st.binary(max_size=200))
def test_parser_never_crashes(b):
    try:
        parse_report(b)
    except SchemaError:
        pass


def test_track_invariant_enforced():
    with pytest.raises(SchemaError):
        ObjectTrack("b", "bottle", "LOST", (0.0, 0.0, 0.0), (1.0, 0.0, 0.0, 0.0))


# --- service ----------------------------------------------------------------

def report(frame):
    return PoseReport(frame / 30.0, frame, (ObjectTrack("b", "bottle", "TRACKING", (0.1, 0.2, 0.7), (1.0, 0.0, 0.0, 0.0), 0.9),))


def test_get_returns_latest_snapshot():
    with PosePublisher("127.0.0.1", 0) as pub:
        poller = PosePoller(pub.url)
        assert poller.connect() == PoseReport()
        pub.publish(report(4))
        a, b = poller.fetch(), poller.fetch()
        assert a == b == report(4)


def test_frame_regression_rejected():
    with PosePublisher("127.0.0.1", 0) as pub:
        pub.publish(report(5))
        with pytest.raises(ValueError):
            pub.publish(report(4))


def test_unknown_path_404():
    import urllib.error
    import urllib.request

    with PosePublisher("127.0.0.1", 0) as pub:
        with pytest.raises(urllib.error.HTTPError):
            urllib.request.urlopen(pub.url.replace("/pose", "/other"), timeout=1)


def test_reads_during_updates_are_complete():
    with PosePublisher("127.0.0.1", 0) as pub:
        stop = threading.Event()

        def writer():
            f = 0
            while not stop.is_set():
                pub.publish(report(f))
                f += 1

        th = threading.Thread(target=writer)
        th.start()
        try:
            poller = PosePoller(pub.url)
            for _ in range(60):
                r = poller.fetch()  # parse would fail on a torn body
                if r.objects:
                    assert r == report(r.frame)
        finally:
            stop.set()
            th.join()


def test_poller_staleness_after_three_failures():
    pub = PosePublisher("127.0.0.1", 0).start()
    poller = PosePoller(pub.url, timeout=0.2)
    pub.publish(report(1))
    assert poller.poll().ok
    pub.stop()
    results = [poller.poll() for _ in range(3)]
    assert [r.stale for r in results] == [False, False, True]
    assert results[-1].report == report(1)  # last good value kept


def test_connect_to_nothing_raises():
    import socket

    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    with pytest.raises(ConnectionError):
        PosePoller(f"http://127.0.0.1:{port}/pose", timeout=0.2).connect()


def test_bind_address_from_environment(monkeypatch):
    monkeypatch.setenv("RAPIDGRASP_POSE_ADDR", "0.0.0.0:9001")
    assert bind_address() == ("0.0.0.0", 9001)
    assert bind_address(port=5) == ("0.0.0.0", 5)
    monkeypatch.delenv("RAPIDGRASP_POSE_ADDR")
    assert bind_address() == ("127.0.0.1", 8077)


def test_rates_validated():
    with pytest.raises(ValueError):
        publisher_loop(None, lambda: None, rate=0)


def test_short_wall_clock_run_observes_each_frame_at_most_twice():
    with PosePublisher("127.0.0.1", 0) as pub:
        counter = iter(range(10**6))
        stop = threading.Event()
        out = {}
        th = threading.Thread(target=lambda: out.setdefault("n", publisher_loop(
            pub, lambda: report(next(counter)), 30.0, duration=2.0, stop=stop)))
        th.start()
        seen = []
        time.sleep(0.01)
        for res in poller_loop(PosePoller(pub.url), 30.0, duration=2.0):
            if res.report.objects:  # skip the empty report served before the first publish
                seen.append(res.report.frame)
        th.join()
    assert out["n"] == 60
    assert all(b >= a for a, b in zip(seen, seen[1:]))
    counts = {}
    for f in seen:
        counts[f] = counts.get(f, 0) + 1
    assert max(counts.values()) <= 2
