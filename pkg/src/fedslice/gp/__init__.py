from .algebra import (Monomial, Posynomial, Signomial, VariableRegistry,
                      condense, exp_power_approx, maclaurin_exp_posynomial,
                      softmax, softmin)
from .program import ConvexGP, GPProgram, RatioConstraint
from .solver import Infeasible, SolveResult, solve_convex
from .successive import MonotonicityError, SolverState, run_successive_gp

__all__ = [
    "Monomial", "Posynomial", "Signomial", "VariableRegistry",
    "condense", "exp_power_approx", "maclaurin_exp_posynomial",
    "softmax", "softmin",
    "ConvexGP", "GPProgram", "RatioConstraint",
    "Infeasible", "SolveResult", "solve_convex",
    "MonotonicityError", "SolverState", "run_successive_gp",
]
