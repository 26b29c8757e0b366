"""Crossbar-array non-ideality simulator and design-space explorer."""

__version__ = "1.0.0"
