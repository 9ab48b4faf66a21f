"""Window solvers: exact branch and bound (small windows) and anytime local search."""

from .exact import MAX_EXACT_OPS, solve_exact
from .local_search import solve_heuristic
from .subproblem import (FEASIBLE, INFEASIBLE, OPTIMAL, TIMEOUT, SolveResult, SolveStats,
                         Subproblem, SubproblemError, check_fragment)

__all__ = [
    "FEASIBLE", "INFEASIBLE", "MAX_EXACT_OPS", "OPTIMAL", "TIMEOUT", "SolveResult", "SolveStats",
    "Subproblem", "SubproblemError", "check_fragment", "solve_exact", "solve_heuristic",
]
