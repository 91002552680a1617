"""One grasp with every component on its own thread and a real clock.

Perception publishes at 30 Hz over HTTP, the planner polls it and sends UDP
datagrams, the bridge applies them and the robot integrates at 240 Hz.
Expect it to take about as long as the grasp itself, roughly 13 seconds.
"""
from rapidgrasp import harness

r = harness.run_live_grasp()
print(f"status {r.status}, lift {r.outcome['lift_height'] * 100:.1f} cm")
print(f"frame regressions seen by the poller: {r.frame_regressions}")
print(f"bridge counters: {r.datagrams}")
