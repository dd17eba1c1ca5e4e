"""Sparse AC power flow with continuous Newton methods.

The semi-implicit variant integrates the Newton flow as a DAE with a stiffly
accurate Rosenbrock method (Rodas3d or Rodas4); Newton-Raphson, Iwamoto,
explicit RK4 and implicit backward-Euler flows are provided as baselines.
"""

from .caseio import NetworkCase, load_case, parse_case, parse_case_json, write_case_json, write_case_m
from .pfcore import PfProblem, build_problem, initial_state, jacobian, mismatch
from .solvers import METHODS, SolverOptions, SolveReport, default_options, solve

__version__ = "0.1.0"

__all__ = [
    "METHODS", "NetworkCase", "PfProblem", "SolveReport", "SolverOptions", "build_problem",
    "default_options", "initial_state", "jacobian", "load_case", "mismatch", "parse_case",
    "parse_case_json", "solve", "write_case_json", "write_case_m",
]
