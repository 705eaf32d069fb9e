"""Continuous treatment policy matching with heterogeneous causal effects."""

__version__ = "0.1.0"
