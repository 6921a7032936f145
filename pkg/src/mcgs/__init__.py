"""Monte-Carlo graph search: PUCT planning over a transposition DAG.

The engine shares search statistics between transposed positions, corrects
the resulting value drift during backpropagation, proves terminal regions
exactly, and spends a fraction of simulations on disconnected exploration.
"""

from .arena import MatchConfig, MatchResult, elo_diff, play_match, wilson_bounds
from .envs import Outcome, make_env
from .evaluators import Evaluation, make_evaluator
from .graph import GraphStore, Node, StoreFullError
from .oracle import SolvedEntry, negamax_solve, solved_table
from .search import SearchConfig, SearchEngine, SearchResult, cpuct, run_search
from .solver import SolverStatus, TerminalSolver, make_endgame_oracle

__version__ = "0.1.0"

__all__ = [
    "Evaluation",
    "GraphStore",
    "MatchConfig",
    "MatchResult",
    "Node",
    "Outcome",
    "SearchConfig",
    "SearchEngine",
    "SearchResult",
    "SolvedEntry",
    "SolverStatus",
    "StoreFullError",
    "TerminalSolver",
    "cpuct",
    "elo_diff",
    "make_endgame_oracle",
    "make_env",
    "make_evaluator",
    "negamax_solve",
    "play_match",
    "run_search",
    "solved_table",
    "wilson_bounds",
    "__version__",
]
