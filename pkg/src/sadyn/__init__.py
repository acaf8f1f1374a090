"""Computational tools for S-arithmetic homogeneous dynamics at desk scale."""

__version__ = "0.1.0"
