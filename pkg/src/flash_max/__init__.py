"""Shallow networks whose hidden units solve the homogeneous Maxwell equations exactly."""

__version__ = "0.1.0"
