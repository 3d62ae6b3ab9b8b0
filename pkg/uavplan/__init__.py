# uavplan/__init__.py
"""Trajectory and uplink power planning for a propulsion-limited fixed-wing UAV."""

__version__ = "1.0.0"
