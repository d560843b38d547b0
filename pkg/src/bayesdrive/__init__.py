"""Bayesian GMM reinforcement learning for vision-based lane following."""

from bayesdrive.core import Action, AgentConfig, Schedule, decay_step, load_config
from bayesdrive.mixture import Mixture, NIGPrior
from bayesdrive.agent import Agent

__all__ = [
    "Action",
    "Agent",
    "AgentConfig",
    "Mixture",
    "NIGPrior",
    "Schedule",
    "decay_step",
    "load_config",
]

__version__ = "0.1.0"
