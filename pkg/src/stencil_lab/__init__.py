"""Monotone finite-difference schemes on lattices.

Solvers for the parabolic and stationary problems, sampled checks of the
coefficient conditions behind mesh-independent gradient bounds, and
Richardson extrapolation.
"""

from .expr import Expr, differentiate, evaluate, parse, render
from .lattice import Domain, GridFunction, Stencil, sample
from .operator import CoefficientSet, Problem, apply_L, apply_L0, consistency_error
from .parabolic import solve_parabolic, stable_dt, verify_max_principle
from .elliptic import series_oracle_1d, solve_elliptic, solve_via_resolvent
from .richardson import extrapolate, observed_order, vandermonde_weights
from .conditions import run_checks
from .estimates import compute_F1, gradient_bound_study

__version__ = "0.1.0"
