from .ev import ValueTable, solve_expected_value
from .worst import WorstCaseSolution, solve_worst_case
from .cvar import CvarSolution, PerturbationResponse, YGrid, build_ygrid, cvar_value_iteration
from .lex import (
    CostGrid,
    LexSolution,
    VarEstimate,
    build_cost_grid,
    estimate_var,
    exact_cost_grid,
    solve_constrained_ev,
)

__all__ = [
    "ValueTable",
    "solve_expected_value",
    "WorstCaseSolution",
    "solve_worst_case",
    "CvarSolution",
    "PerturbationResponse",
    "YGrid",
    "build_ygrid",
    "cvar_value_iteration",
    "CostGrid",
    "LexSolution",
    "VarEstimate",
    "build_cost_grid",
    "solve_constrained_ev",
    "estimate_var",
    "exact_cost_grid",
]
