"""Matrix factorization with structured factors by split projection methods."""

from . import compound, matcore, problems, projections, solver
from .errors import MatsplitError
from .solver import SolveConfig, SolveOutcome, SplitVariables, ProjectionPair, solve

__all__ = [
    "compound", "matcore", "problems", "projections", "solver",
    "MatsplitError", "SolveConfig", "SolveOutcome", "SplitVariables",
    "ProjectionPair", "solve",
]

__version__ = "0.1.0"
