"""Interval-aware NAR polynomial identification."""

__version__ = "0.1.0"
