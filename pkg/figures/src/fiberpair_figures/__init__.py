"""Batch reproduction of the publication figures from simulation output files."""

__version__ = "0.1.0"
