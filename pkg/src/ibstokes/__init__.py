"""Immersed-boundary Stokes contour dynamics with regularization-error studies.

Subpackages
-----------
kernels
    Regularized delta-function profiles, moments, and the vanishing-first-
    moment two-scale construction.
auxfun
    Auxiliary functions f1..f5 of the mollified Stokeslet along secants.
contour
    Spectral closed-curve representation, elasticity laws, Sobolev norms.
dynamics
    Unregularized / regularized / projected velocity evaluation.
stepper
    Exponential time differencing and trajectory diagnostics.
experiments
    Static and dynamic convergence-rate studies.
cli
    Batch command-line entry points.
"""

from . import auxfun, contour, dynamics, experiments, kernels, stepper

__all__ = ["auxfun", "contour", "dynamics", "experiments", "kernels",
           "stepper"]
__version__ = "0.1.0"
