"""Compressed sensing with parallel (multi-sensor) acquisition."""

__version__ = "0.1.0"
