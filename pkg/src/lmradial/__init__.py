"""Radial solutions of the Lorentz-Minkowski mean-curvature Dirichlet problem."""
__version__ = "0.1.0"
