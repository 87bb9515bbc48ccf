"""Recover an inner boundary and its Robin admittance from two Cauchy pairs."""

__version__ = "0.1.0"
