"""Automated program repair by round-trip translation."""

__version__ = "0.1.0"
