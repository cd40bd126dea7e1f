"""Planar three-body problem on shape space."""
__version__ = "0.1.0"
