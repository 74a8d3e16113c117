"""Generalised robustness of incompatibility, teleportation and Buscemi nonlocality."""

__version__ = "0.1.0"
