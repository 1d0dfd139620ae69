"""Parareal for linear and semilinear 1D parabolic problems.

The coarse propagator is backward Euler; the fine propagator is any implicit
Runge-Kutta scheme from the catalog.  Besides the solver, the package computes
the suprema that bound the parareal contraction factor.
"""

from .convergence import find_threshold, kappa, parareal_factor
from .engine import IterationHistory, PararealConfig, measured_factor, run, sequential_fine_reference
from .fem1d import Indicator, Mesh1D, assemble, fem_system, project, solve_tri
from .polyrat import Polynomial, RationalFn
from .schemes import BUILTIN_NAMES, builtin

__all__ = [
    "BUILTIN_NAMES", "Indicator", "IterationHistory", "Mesh1D", "PararealConfig", "Polynomial",
    "RationalFn", "assemble", "builtin", "fem_system", "find_threshold", "kappa",
    "measured_factor", "parareal_factor", "project", "run", "sequential_fine_reference", "solve_tri",
]
