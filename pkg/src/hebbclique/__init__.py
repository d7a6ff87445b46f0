"""Consolidated Hebbian learning under noise and energy limits, and the
binary clique associative memory it converges to."""

__version__ = "0.1.0"
