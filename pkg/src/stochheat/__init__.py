"""Finite-difference simulation of the stochastic heat equation on [0, 1]."""

__version__ = "0.1.0"
