"""Numerical laboratory for translating graphs of mean curvature flow."""

__version__ = "0.1.0"
