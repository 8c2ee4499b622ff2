"""Reward-modulated policy-gradient learning for networks of stochastic
binary neurons, with exact verification oracles on finite POMDPs and the
sonar-classification / inverted-pendulum experiments."""

from .network import (
    LayeredNetwork,
    NetworkConfig,
    average_reward,
    init_network,
    learn_step,
    step_network,
)
from .neuron import (
    NeuronUnit,
    Representation,
    SynapticState,
    compute_potential,
    fire,
    grad_log_ratio,
    sigmoid,
)

__version__ = "0.1.0"

__all__ = [
    "LayeredNetwork",
    "NetworkConfig",
    "NeuronUnit",
    "Representation",
    "SynapticState",
    "average_reward",
    "compute_potential",
    "fire",
    "grad_log_ratio",
    "init_network",
    "learn_step",
    "sigmoid",
    "step_network",
    "__version__",
]
