"""Simulated perception-to-manipulation pipeline for a humanoid arm.

Modules: ``se3`` (poses), ``simworld`` (camera and estimator simulation),
``tracker`` (detection/tracking state machine), ``stream`` (HTTP pose
service), ``kinematics`` and ``planner`` (IK and waypoint plans), ``bridge``
(UDP joint commands and robot plant), ``harness`` (experiments).
"""
__version__ = "0.1.0"
