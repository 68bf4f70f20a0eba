"""Shock formation for small-data strictly hyperbolic systems in one space dimension."""

__version__ = "0.1.0"
