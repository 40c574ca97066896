"""Delegative Banzhaf power, delegation games and their simulation."""

from __future__ import annotations

from .core import (
    NULL_AGENT,
    AgentClass,
    DelegationProfile,
    InvalidElection,
    Lde,
    NoChain,
    accrued,
    classify,
    coalition,
    delegation_distance,
    guru_of,
    intermediaries,
    members,
    restrict,
    restricted_accrued,
)
from .game import (
    DelegationGame,
    IllegalStrategy,
    NotComplete,
    best_response,
    construct_ne_complete,
    find_pure_ne,
    is_nash,
    theorem2_instance,
    utility,
)
from .power import (
    ExactBackend,
    MonteCarloBackend,
    TooLarge,
    banzhaf_exact,
    delegative_banzhaf,
    delegative_banzhaf_all,
    delegative_banzhaf_mc,
    delegative_game,
    guru_game,
)

__all__ = [
    "NULL_AGENT",
    "AgentClass",
    "DelegationGame",
    "DelegationProfile",
    "ExactBackend",
    "IllegalStrategy",
    "InvalidElection",
    "Lde",
    "MonteCarloBackend",
    "NoChain",
    "NotComplete",
    "TooLarge",
    "accrued",
    "banzhaf_exact",
    "best_response",
    "classify",
    "coalition",
    "construct_ne_complete",
    "delegation_distance",
    "delegative_banzhaf",
    "delegative_banzhaf_all",
    "delegative_banzhaf_mc",
    "delegative_game",
    "find_pure_ne",
    "guru_game",
    "guru_of",
    "intermediaries",
    "is_nash",
    "members",
    "restrict",
    "restricted_accrued",
    "theorem2_instance",
    "utility",
]
