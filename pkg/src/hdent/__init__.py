"""Certify high-dimensional entanglement from coincidence counts in two bases."""

__version__ = "0.1.0"
