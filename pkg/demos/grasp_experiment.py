"""Grasp a bottle at the centre and four corners of the desk workspace.

Every frame runs the whole loop: simulated camera, tracker, HTTP pose
stream, digital twin, IK planner, UDP joint commands, bridge and PD-driven
arm. The clock is simulated, so the printed report is identical on every
run with the same seed.
"""
import sys

from rapidgrasp import harness

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 7
report = harness.run_grasp_experiment(seed=seed)
for p in report.positions:
    x, y = p.position
    print(f"{p.name:<12} ({x:.2f}, {y:+.2f})  {p.status:<12} lift {p.lift_height * 100:5.1f} cm")
print(f"{report.overall_success_count}/{len(report.positions)} lifted; "
      f"{report.datagrams['sent']} datagrams; {report.safety_violations} safety violations")
