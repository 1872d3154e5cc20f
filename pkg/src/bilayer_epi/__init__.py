"""Optimal rate design for two competing SIS processes on bilayer networks."""

__version__ = "0.1.0"
