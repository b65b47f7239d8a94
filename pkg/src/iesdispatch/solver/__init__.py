"""Exact MILP solving: simplex LP core, branch-and-bound, backend registry."""

from .simplex import (
    LpSolution,
    NumericalFailure,
    solve_lp,
    solve_lp_arrays,
)
from .branch_bound import MilpOptions, MilpSolution, solve_milp
from .backends import (
    Backend,
    BackendUnavailableError,
    available_backends,
    get_backend,
)

__all__ = [
    "LpSolution",
    "NumericalFailure",
    "solve_lp",
    "solve_lp_arrays",
    "MilpOptions",
    "MilpSolution",
    "solve_milp",
    "Backend",
    "BackendUnavailableError",
    "available_backends",
    "get_backend",
]
