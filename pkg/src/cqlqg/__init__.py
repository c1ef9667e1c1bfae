"""Coherent quantum LQG controllers with Luenberger dynamics."""
__version__ = "0.1.0"
