"""Common environment contract for the learning experiments."""

from __future__ import annotations

import abc

import numpy as np


class Environment(abc.ABC):
    """Step-based task interface.

    `observe()` returns a real vector of constant length per instance;
    `act()` consumes the network's output activities for one step;
    `reward()` is defined after every `act()` and refers to the step just
    taken; `done()` signals that the episode must be reset.
    """

    @abc.abstractmethod
    def reset(self, rng: np.random.Generator) -> np.ndarray:
        """Reinitialize the episode; returns the first observation."""

    @abc.abstractmethod
    def observe(self) -> np.ndarray:
        """Current network input vector."""

    @abc.abstractmethod
    def act(self, actions: np.ndarray) -> None:
        """Apply one step of output activities."""

    @abc.abstractmethod
    def reward(self) -> float:
        """Reward for the step just taken."""

    @abc.abstractmethod
    def done(self) -> bool:
        """Whether the episode has ended."""
