"""Convex relaxation, probabilistic rounding and optimality certificates for
multiclass image labeling."""

__version__ = "0.1.0"
