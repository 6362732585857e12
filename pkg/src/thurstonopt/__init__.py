"""Ergodic optimization on expanding Thurston maps given by two-tile subdivision rules."""

__version__ = "0.1.0"
