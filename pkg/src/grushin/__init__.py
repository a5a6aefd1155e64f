"""Spectral analysis, observability and null control of the Grushin heat equation.

The equation is d_t f - d_x^2 f - |x|^{2 gamma} d_y^2 f = u 1_omega on the
rectangle (-1, 1) x (0, 1), controlled from a vertical strip
omega = (a, b) x (0, 1) with 0 < a < b < 1. Fourier expansion in y reduces it
to the family of heat equations driven by the mode operators
A_{n, gamma} = -d^2/dx^2 + (n pi)^2 |x|^{2 gamma} on (-1, 1), and everything
in this package is organized around that reduction:

  core           grids, quadrature, configuration
  spectral       mode operators and ground eigenpairs
  bounds         eigenvalue/eigenfunction bounds and the cost trichotomy
  evolution      Crank-Nicolson mode solvers and 2-D synthesis
  observability  adjoint Gramian and observability cost
  control        HUM controls by penalized duality
  carleman       Carleman weights and certified constants
  report         delimited/JSON/PNG output helpers
  cli            command-line entry point
"""

__version__ = "0.1.0"

from .core import Grid1D, ProblemConfig, TimeGrid, make_grid, make_time_grid
from .spectral import (
    EigenPair,
    ModeOperator,
    ScalingFit,
    assemble_mode_operator,
    eigen_scaling_sweep,
    first_k_eigenpairs,
    ground_eigenpair,
)

__all__ = [
    "__version__",
    "Grid1D",
    "ProblemConfig",
    "TimeGrid",
    "make_grid",
    "make_time_grid",
    "EigenPair",
    "ModeOperator",
    "ScalingFit",
    "assemble_mode_operator",
    "eigen_scaling_sweep",
    "first_k_eigenpairs",
    "ground_eigenpair",
]
