"""Multimode photon-pair source and mode-to-time sorter simulation toolkit."""

__version__ = "0.1.0"
