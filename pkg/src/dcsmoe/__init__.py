"""Directed controller synthesis for modular discrete event systems."""

__version__ = "0.1.0"
