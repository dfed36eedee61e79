"""Empathy detection from frame-level visual behavior logs."""

__version__ = "0.1.0"
