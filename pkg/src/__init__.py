"""
heston-degen

Solver and numerical verifier for the degenerate Heston pricing equation.
"""

__version__ = "0.3.0"
