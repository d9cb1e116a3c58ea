"""Success probability and duration statistics of episodes in episodic Markov chains."""
from .chain import Chain, Diagnostic, Edge, Mdp, ModelError, Policy, induce_chain, validate_chain
from .monte_carlo import Episode, McEstimate, estimate, simulate_episode
from .qdist import QTable, choose_horizon, q_distribution, truncated_moments
from .river import RiverConfig, build_river
from .solver import (ConvergenceWarning, SolveConfig, SolveResult, solve_all, solve_mean,
                     solve_second_moment, solve_success, std_dev)

__all__ = [
    "Chain", "ConvergenceWarning", "Diagnostic", "Edge", "Episode", "McEstimate", "Mdp",
    "ModelError", "Policy", "QTable", "RiverConfig", "SolveConfig", "SolveResult",
    "build_river", "choose_horizon", "estimate", "induce_chain", "q_distribution",
    "simulate_episode", "solve_all", "solve_mean", "solve_second_moment", "solve_success",
    "std_dev", "truncated_moments", "validate_chain",
]
