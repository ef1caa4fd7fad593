"""Quasi-static grasp analysis and tactile-sensor simulation for small objects."""

__version__ = "0.1.0"
