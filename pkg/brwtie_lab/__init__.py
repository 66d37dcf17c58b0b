"""
Numerical laboratory for branching random walks in time-inhomogeneous
environments: optimal speed profiles, second-order constants, the Airy
eigenvalue machinery behind them, and Monte Carlo checks.
"""

__version__ = "0.1.0"
