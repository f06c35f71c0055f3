"""Conformal group actions on the unit ball, harmonic polynomial bases and
the contraction kernels built from them."""

__version__ = "0.1.0"
