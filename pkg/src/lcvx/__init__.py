"""Lossless convexification for discrete-time optimal control."""

__version__ = "0.1.0"
