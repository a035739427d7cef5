"""Exact solvers and enumeration oracles for finite dynamic inference.

Three settings are covered: a known quantity-generation model, Bayesian
offline learning from an imitation-style training set, and Bayesian online
learning where the true quantity is revealed after every round.
"""

from dyninfer.errors import (
    CapExceeded,
    ImpossibleDataset,
    ImpossibleObservation,
    InvalidScenario,
    NodeNotFound,
)
from dyninfer.model import Dataset, Scenario, Violation, generate_dataset, mixture_kernel, validate_scenario
from dyninfer.known_dp import KnownPolicy, bar_loss, solve_known, value_known
from dyninfer.offline import OfflinePolicy, offline_pipeline, posterior_from_dataset, solve_offline, tilde_loss
from dyninfer.online import OnlinePolicy, act_online, belief_update, reachable_beliefs, solve_online, value_online

__version__ = "0.1.0"

__all__ = [
    "CapExceeded",
    "Dataset",
    "ImpossibleDataset",
    "ImpossibleObservation",
    "InvalidScenario",
    "KnownPolicy",
    "NodeNotFound",
    "OfflinePolicy",
    "OnlinePolicy",
    "Scenario",
    "Violation",
    "act_online",
    "bar_loss",
    "belief_update",
    "generate_dataset",
    "mixture_kernel",
    "offline_pipeline",
    "posterior_from_dataset",
    "reachable_beliefs",
    "solve_known",
    "solve_offline",
    "solve_online",
    "tilde_loss",
    "validate_scenario",
    "value_known",
    "value_online",
]
