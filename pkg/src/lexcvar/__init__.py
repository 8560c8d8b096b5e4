"""Risk-averse planning for stochastic shortest path MDPs: expected cost,
worst case, CVaR, and expected cost subject to optimal CVaR."""

from .mdp import History, Mdp, RandomSource, make_mdp, validate_mdp
from .risk import DiscreteDistribution, cvar_dual, cvar_of_distribution

__version__ = "0.1.0"

__all__ = [
    "History",
    "Mdp",
    "RandomSource",
    "make_mdp",
    "validate_mdp",
    "DiscreteDistribution",
    "cvar_dual",
    "cvar_of_distribution",
]
