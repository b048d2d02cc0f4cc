"""Finite-field self-correction: worst-case answers from faulty average-case solvers."""

__version__ = "0.1.0"
