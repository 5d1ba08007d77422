"""Deterministic asynchronous camera/radar/LiDAR capture workbench.

Simulates sensor sweeps around a moving ego vehicle, rebuilds synchronous
and asynchronous dataset variants, applies velocity-based radar point
extrapolation, and measures BEV vehicle-segmentation IoU across a latency
ladder.
"""

__version__ = "0.1.0"
