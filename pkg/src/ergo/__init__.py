"""Numerics for sublinear expectations of 1-D diffusions under volatility
uncertainty: a monotone PDE solver, long-time (invariant and ergodic)
value extraction, scenario Monte Carlo validation, and a CLI.
"""

from .expr import parse, evaluate, deriv
from .gfunc import GFunction, g_eval, check_nondegenerate
from .model import GDiffusionModel, AssumptionReport, make_builtin, estimate_h2_eta
from .pde import Grid1D, PdeSolution, solve, g_normal_expectation
from .longtime import InvariantResult, ErgodicResult, invariant_value, \
    ergodic_value, ergodic_residual
from .mc import ConstantPolicy, TablePolicy, BangBangPolicy, McEstimate, \
    simulate, lower_bound, bang_bang_policy, contraction_check
from .measures import compare, invariance_defect, sublinearity_report, \
    gap_lower_bound, default_dictionary

__version__ = "0.1.0"

__all__ = [
    "parse", "evaluate", "deriv",
    "GFunction", "g_eval", "check_nondegenerate",
    "GDiffusionModel", "AssumptionReport", "make_builtin", "estimate_h2_eta",
    "Grid1D", "PdeSolution", "solve", "g_normal_expectation",
    "InvariantResult", "ErgodicResult", "invariant_value", "ergodic_value",
    "ergodic_residual",
    "ConstantPolicy", "TablePolicy", "BangBangPolicy", "McEstimate",
    "simulate", "lower_bound", "bang_bang_policy", "contraction_check",
    "compare", "invariance_defect", "sublinearity_report",
    "gap_lower_bound", "default_dictionary",
    "__version__",
]
