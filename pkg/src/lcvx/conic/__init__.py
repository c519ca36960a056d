"""Standard-form cone programs and the solvers behind them."""

from .backends import available_backends, register_backend, solve_with_backend
from .ipm import solve
from .program import ConeBlock, ConeKind, ConeProgram, simple_program
from .solution import ConeSolution, SolverSettings, Status, certify

__all__ = [
    "ConeBlock",
    "ConeKind",
    "ConeProgram",
    "ConeSolution",
    "SolverSettings",
    "Status",
    "available_backends",
    "certify",
    "register_backend",
    "simple_program",
    "solve",
    "solve_with_backend",
]
