"""Simulation and certification toolkit for randomness generation from the tilted-CHSH game."""

__version__ = "0.1.0"
