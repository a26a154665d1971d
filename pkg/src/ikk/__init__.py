"""Null-space arm-motion control pipeline.

Identify the kernel of a redundant arm from motion data, interpolate the
per-workspace-node signal bases over the hand workspace, and emit a
normalized 0-100 control value in real time.
"""

__version__ = "0.1.0"
