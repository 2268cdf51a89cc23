"""Blocking-condition resolution: sequential action selection over a resolution forest."""

__version__ = "0.1.0"
