"""Quantum Toda lattice, quantum cohomology of complete flags and their mirror."""

__version__ = "0.1.0"
