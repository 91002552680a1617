"""Encode a joint command, inspect its bytes, and feed it to a bridge.

The arm targets are normalized to [0, 1] by each joint's range before they
go on the wire; the bridge maps them back and hands them to the PD plant.
"""
import numpy as np

from rapidgrasp import bridge as br
from rapidgrasp.planner import default_chain, normalize_joints

arm = default_chain()
home = arm.home_config()
packet = br.JointCommandPacket(br.ARM, 1, tuple(normalize_joints(home, arm)))
raw = br.encode_packet(packet)
print(f"{len(raw)} bytes: {raw[:11].hex(' ')} ...")

robot = br.RobotSim(br.RobotState.at_rest(arm))
bridge = br.Bridge(robot, arm.limits)
bridge.handle_datagram(raw)
print("error after float32 quantization (rad):", float(np.max(np.abs(robot.state.target - home))))

# an older sequence number and a truncated datagram are both refused
bridge.handle_datagram(br.encode_packet(br.JointCommandPacket(br.ARM, 0, packet.normalized)))
bridge.handle_datagram(raw[:-5])
print(bridge.report())
