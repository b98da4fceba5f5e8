"""
Core numerical modules for heston-degen.

This package contains the parameter gates, grids and norms, the discrete
operator, time stepping, barrier checks, pricing oracles and trace checks.
"""
