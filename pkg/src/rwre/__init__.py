"""Quenched hitting times of one-dimensional random walks in random environment."""

__version__ = "0.1.0"
