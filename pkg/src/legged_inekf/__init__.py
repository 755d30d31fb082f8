"""Invariant EKF for legged robots with camera-extrinsic self-calibration."""

__version__ = "0.1.0"
