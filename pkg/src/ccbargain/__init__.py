"""Cooperative predictive cruise control as a dynamic bargaining game."""

__version__ = "0.1.0"
