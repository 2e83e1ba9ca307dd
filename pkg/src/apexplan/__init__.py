"""Trajectory planning stack for high-speed driving near the handling limits."""

__version__ = "0.1.0"
