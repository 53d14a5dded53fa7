"""Depth-sensor arm-to-robot teleoperation toolkit.

Turns skeleton streams into robot gripper poses through either a fixed
affine map or a per-user thin-plate-spline map trained in a 16-keypose
calibration session, classifies the hand open/closed from depth crops,
clamps targets into the robot's reachable workspace, and streams it all
through a pub/sub runtime with an HTTP/WebSocket service on top.
"""

__version__ = "0.1.0"

from .errors import RetargetError  # noqa: F401
