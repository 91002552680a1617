"""Command line entry point: ``rapidgrasp <subcommand>``.

Every subcommand prints a JSON document on stdout and exits with status 1
when a result violates its acceptance bound.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import signal
import sys
import threading
from dataclasses import asdict, replace
from typing import Optional

from . import bridge as br
from . import harness
from .planner import default_chain
from .simworld import ScenarioKind, ground_truth, load_config, preset, simulate_detection, simulate_estimate
from .stream import ObjectTrack, PosePublisher, PoseReport, publisher_loop
from .tracker import Phase, Tracker, TrackerThresholds


def _emit(doc: dict) -> None:
    json.dump(doc, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


@contextlib.contextmanager
def _stop_on_signal():
    """Event set by SIGINT/SIGTERM for the duration of the block."""
    stop = threading.Event()
    sigs = (signal.SIGINT, signal.SIGTERM)
    previous = [signal.signal(s, lambda *_: stop.set()) for s in sigs]
    try:
        yield stop
    finally:
        for s, h in zip(sigs, previous):
            signal.signal(s, h)


def cmd_track(a) -> int:
    kind = ScenarioKind(a.scenario)
    cfg = preset(kind)
    customized = a.config is not None or a.frames is not None or a.seed is not None
    if a.config:
        cfg = load_config(a.config, cfg)
    overrides = {}
    if a.frames is not None:
        overrides["frame_count"] = a.frames
        overrides["occlusion_windows"] = tuple(w for w in cfg.occlusion_windows if w.end <= a.frames)
    if a.seed is not None:
        overrides["rng_seed"] = a.seed
    cfg = replace(cfg, **overrides) if overrides else cfg
    run = harness.run_tracking_scenario(cfg, log_path=a.log, summary_path=a.summary)
    problems = harness.tracking_violations(cfg.kind, run.metrics, check_sigma=not customized)
    doc = harness.metrics_summary(cfg, run.metrics)
    doc["violations"] = problems
    _emit(doc)
    return 1 if problems else 0


def cmd_grasp(a) -> int:
    report = harness.run_grasp_experiment(seed=a.seed)
    if a.log:
        with open(a.log, "w") as f:
            f.write(report.to_json())
    problems = harness.grasp_violations(report)
    doc = report.to_dict()
    doc["violations"] = problems
    _emit(doc)
    return 1 if problems else 0


def cmd_glue(a) -> int:
    report = harness.run_glue_demo(a.edge, standoff=a.standoff, seed=a.seed)
    problems = harness.glue_violations(report)
    doc = report.to_dict()
    doc["violations"] = problems
    if a.log:
        with open(a.log, "w") as f:
            json.dump(doc, f, indent=2, sort_keys=True)
    _emit(doc)
    return 1 if problems else 0


def cmd_serve(a) -> int:
    """Publish a tracked scenario on the pose endpoint at 30 Hz until interrupted."""
    cfg = preset(a.scenario)
    obj = harness.BOTTLE

    def estimator(mode, prior, roi, frame):
        return simulate_estimate(cfg, mode, ground_truth(cfg, obj, frame % cfg.frame_count), prior, frame)

    tracker = Tracker("bottle-0", obj.class_label, estimator, TrackerThresholds(frame_rate=cfg.frame_rate))
    frame = [0]

    def source() -> PoseReport:
        f = frame[0]
        frame[0] += 1
        det = simulate_detection(cfg, obj, f, ground_truth(cfg, obj, f % cfg.frame_count))
        pose = tracker.step(f, det)
        st = tracker.state
        if st.phase is Phase.TRACKING:
            pose = pose or st.last_pose
            track = ObjectTrack(tracker.object_id, obj.class_label, "TRACKING", pose.position,
                                pose.orientation.as_tuple(), st.last_confidence)
        else:
            track = ObjectTrack(tracker.object_id, obj.class_label, st.phase.value, confidence=st.last_confidence)
        return PoseReport(round(f / cfg.frame_rate, 9), f, (track,))

    with _stop_on_signal() as stop, PosePublisher(a.host, a.port) as pub:
        print(f"serving {pub.url}", file=sys.stderr)
        n = publisher_loop(pub, source, cfg.frame_rate, duration=a.duration, stop=stop)
    _emit({"published": n, "url": pub.url})
    return 0


def cmd_bridge(a) -> int:
    """Receive joint commands over UDP and drive the simulated robot until interrupted."""
    chain = default_chain()
    robot = br.RobotSim(br.RobotState.at_rest(chain), record=False)
    bridge = br.Bridge(robot, chain.limits)
    sock = br.open_bridge_socket(a.host, a.port)
    print(f"bridge listening on udp://{a.host}:{sock.getsockname()[1]}", file=sys.stderr)
    with _stop_on_signal() as stop:
        threads = [
            threading.Thread(target=br.bridge_loop, args=(sock, bridge, stop), daemon=True),
            threading.Thread(target=br.robot_loop, args=(robot, stop), daemon=True),
        ]
        for t in threads:
            t.start()
        stop.wait(a.duration)
        stop.set()
        for t in threads:
            t.join(timeout=2.0)
    sock.close()
    doc = bridge.report()
    doc["joint_positions"] = [float(v) for v in robot.state.position]
    _emit(doc)
    return 0


def cmd_all(a) -> int:
    doc, problems = {"tracking": {}}, []
    for kind in ScenarioKind:
        m = harness.run_tracking_scenario(preset(kind)).metrics
        doc["tracking"][kind.value] = m.to_dict()
        problems += harness.tracking_violations(kind, m)
    grasp_wiring, glue_wiring = [], []
    grasp = harness.run_grasp_experiment(seed=a.seed, wiring_out=grasp_wiring)
    glue = harness.run_glue_demo(seed=a.seed, wiring_out=glue_wiring)
    doc["grasp"] = grasp.to_dict()
    doc["glue"] = glue.to_dict()
    problems += harness.grasp_violations(grasp) + harness.glue_violations(glue)
    if grasp_wiring != glue_wiring:
        problems.append("grasp and glue runs used different pipeline components")
    if a.live:
        live = harness.run_live_grasp(seed=a.seed)
        doc["live"] = asdict(live)
        if not live.outcome["success"] or live.frame_regressions or live.safety_violations:
            problems.append("live topology grasp failed")
    doc["violations"] = problems
    _emit(doc)
    return 1 if problems else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rapidgrasp", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("track", help="run a tracking scenario and report its metrics")
    t.add_argument("--scenario", choices=[k.value for k in ScenarioKind], default="static")
    t.add_argument("--frames", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--config", help="scenario override file")
    t.add_argument("--log", help="write the per-frame JSONL log here")
    t.add_argument("--summary", help="write the metrics summary JSON here")
    t.set_defaults(func=cmd_track)

    g = sub.add_parser("grasp", help="five-position grasp experiment (simulated clock)")
    g.add_argument("--seed", type=int, default=7)
    g.add_argument("--log", help="write the grasp report JSON here")
    g.set_defaults(func=cmd_grasp)

    gl = sub.add_parser("glue", help="glue-path demo along a window edge")
    gl.add_argument("--edge", help="edge polyline file (default: bundled window edge)")
    gl.add_argument("--standoff", type=float)
    gl.add_argument("--seed", type=int, default=7)
    gl.add_argument("--log", help="write the report JSON here")
    gl.set_defaults(func=cmd_glue)

    s = sub.add_parser("serve", help="publish tracked poses over HTTP at 30 Hz")
    s.add_argument("--host")
    s.add_argument("--port", type=int, help="default from RAPIDGRASP_POSE_ADDR or 8077")
    s.add_argument("--scenario", choices=[k.value for k in ScenarioKind], default="static")
    s.add_argument("--duration", type=float, help="seconds; default runs until interrupted")
    s.set_defaults(func=cmd_serve)

    b = sub.add_parser("bridge", help="UDP joint-command bridge driving the simulated robot")
    b.add_argument("--host", default="127.0.0.1")
    b.add_argument("--port", type=int, default=br.DEFAULT_PORT)
    b.add_argument("--duration", type=float, help="seconds; default runs until interrupted")
    b.set_defaults(func=cmd_bridge)

    al = sub.add_parser("all", help="every experiment through the full topology (simulated clock)")
    al.add_argument("--seed", type=int, default=7)
    al.add_argument("--live", action="store_true", help="also run one grasp with wall-clock threads")
    al.set_defaults(func=cmd_all)
    return p


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as e:
        print(f"rapidgrasp: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
