"""Robust stability and performance tests for LTI systems with dynamic uncertainties."""

__version__ = "0.1.0"
