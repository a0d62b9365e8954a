"""Pauli channel estimation from cycle benchmarking."""

__version__ = "0.1.0"
