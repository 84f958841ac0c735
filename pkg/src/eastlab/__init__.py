"""Simulation and exact analysis of the East-like kinetically constrained process."""

__version__ = "0.1.0"
