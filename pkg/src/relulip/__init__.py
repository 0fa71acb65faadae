"""Numerical laboratory for Lipschitz constants of random ReLU networks."""

__version__ = "0.1.0"
