"""Self-contained mixed-integer linear programming toolkit.

Bounded-variable dense simplex for the LP relaxation, best-bound branch and
bound over binaries (with ternary branching on registered one-hot triples),
and CPLEX-LP import/export for external cross-checks.
"""

from .branch_bound import SolveBudget, solve_milp
from .lp_format import LpParseError, export_lp, parse_lp, read_lp, write_lp
from .model import (FEASIBLE_BUDGET_EXHAUSTED, INFEASIBLE, OPTIMAL, LinExpr,
                    MilpModel, MilpSolution, lin_sum)
from .simplex import SimplexBreakdown, solve_lp

__all__ = [
    "FEASIBLE_BUDGET_EXHAUSTED",
    "INFEASIBLE",
    "OPTIMAL",
    "LinExpr",
    "LpParseError",
    "MilpModel",
    "MilpSolution",
    "SimplexBreakdown",
    "SolveBudget",
    "export_lp",
    "lin_sum",
    "parse_lp",
    "read_lp",
    "solve_lp",
    "solve_milp",
    "write_lp",
]
