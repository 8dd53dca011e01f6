"""Mixed-integer linear programming: model builder, branch and bound, MPS I/O."""

from .bnb import MilpConfig, MilpSolution, branch_and_bound, polish, solve, solve_highs
from .model import (DEFAULT_M, DEFAULT_MBAR, DEFAULT_MLOW, BigMWarning, MilpModel,
                    MilpStructuralError, add_disjunction_bigM, check_big_m,
                    linearize_binary_product)
from .mps import export_mps, import_mps
from .simplex import solve_lp

__all__ = [
    "MilpConfig", "MilpSolution", "MilpModel", "MilpStructuralError", "BigMWarning",
    "DEFAULT_M", "DEFAULT_MBAR", "DEFAULT_MLOW", "add_disjunction_bigM", "check_big_m",
    "linearize_binary_product", "branch_and_bound", "polish", "solve", "solve_highs",
    "export_mps", "import_mps", "solve_lp",
]
