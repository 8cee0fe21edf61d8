"""Balls-in-bins with power feedback: simulation, rate function and oracles."""

__version__ = "0.1.0"
