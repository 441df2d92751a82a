"""Matched-pair sensitivity analysis and two-subgroup cross-screening."""

__version__ = "0.1.0"
