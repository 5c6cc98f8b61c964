"""Unsupervised physics-informed solver for 1-D stationary Schrodinger
eigenproblems: library plus the ``eigenpinn`` command-line tool."""

__version__ = "0.1.0"
