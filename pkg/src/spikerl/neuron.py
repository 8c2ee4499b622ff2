"""Stochastic binary neuron primitives.

A neuron integrates its presynaptic activities through a weighted sum
(the potential), fires with probability given by the logistic squashing
function of that potential, and exposes the score of its firing decision
(the gradient of the log-probability of the sampled activity with respect
to each synaptic weight). Two activity encodings are supported: {0, 1}
and the symmetric {-1, +1}.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

# exp() overflows float64 just above 709; clamping at +-700 keeps the
# logistic monotone and NaN-free for any finite input.
EXP_CLAMP = 700.0


class Representation(enum.Enum):
    """Binary activity encoding of non-input neurons."""

    ASYMMETRIC_01 = "asymmetric01"
    SYMMETRIC_PM1 = "symmetric_pm1"

    @property
    def fire_value(self) -> float:
        return 1.0

    @property
    def nofire_value(self) -> float:
        return 0.0 if self is Representation.ASYMMETRIC_01 else -1.0


def sigmoid(alpha):
    """Logistic squashing function 1 / (1 + exp(-alpha)).

    Accepts scalars or arrays. The exponent argument is clamped to
    +-700 before exponentiation, so the output saturates smoothly at 0/1
    for any finite input. NaN in gives NaN out.
    """
    a = np.clip(np.asarray(alpha, dtype=float), -EXP_CLAMP, EXP_CLAMP)
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    if np.ndim(alpha) == 0:
        return float(out)
    return out


def compute_potential(weights, presyn) -> float:
    """Weighted sum of presynaptic activities: sum_j weights[j] * presyn[j]."""
    w = np.asarray(weights, dtype=float)
    u = np.asarray(presyn, dtype=float)
    if w.shape != u.shape:
        raise ValueError(
            f"weights and presynaptic activities differ in length: {w.shape} vs {u.shape}"
        )
    return float(w @ u) if w.size else 0.0


def fire(potential: float, rng: np.random.Generator,
         representation: Representation = Representation.SYMMETRIC_PM1) -> float:
    """Sample a binary activity: the fire value with probability sigmoid(potential).

    Consumes exactly one uniform draw from ``rng``.
    """
    p = sigmoid(potential)
    return representation.fire_value if rng.random() < p else representation.nofire_value


def fire_layer(potentials: np.ndarray, rng: np.random.Generator,
               representation: Representation) -> np.ndarray:
    """Vectorized `fire`: one uniform draw per neuron, in array order."""
    p = sigmoid(potentials)
    draws = rng.random(p.shape[0])
    return np.where(draws < p, representation.fire_value, representation.nofire_value)


def activity_as_unit(activity, representation: Representation):
    """Map an activity to the {0, 1} scale ((u+1)/2 under the symmetric encoding)."""
    if representation is Representation.ASYMMETRIC_01:
        return activity
    return (activity + 1.0) / 2.0


def _check_activity(activity: float, representation: Representation) -> None:
    valid = (0.0, 1.0) if representation is Representation.ASYMMETRIC_01 else (-1.0, 1.0)
    if activity not in valid:
        raise ValueError(
            f"activity {activity!r} invalid for {representation.value} (expected one of {valid})"
        )


def grad_log_ratio(activity: float, potential: float, presyn_j: float,
                   representation: Representation = Representation.SYMMETRIC_PM1) -> float:
    """Score of the sampled activity w.r.t. one synaptic weight.

    d/dw_j log Pr(u | v), with Pr(fire) = sigmoid(v) and v = sum_j w_j * presyn_j.
    Evaluates to (u - sigmoid(v)) * presyn_j on the {0,1} encoding and to
    ((u+1)/2 - sigmoid(v)) * presyn_j on the {-1,+1} encoding.
    """
    _check_activity(activity, representation)
    u01 = activity_as_unit(activity, representation)
    return (u01 - sigmoid(potential)) * presyn_j


@dataclass
class SynapticState:
    """One synapse: connection strength and its eligibility trace."""

    weight: float
    trace: float = 0.0


@dataclass
class NeuronUnit:
    """A single stochastic binary unit with its synapse array.

    Scalar reference implementation of the per-neuron dynamics; the layered
    network uses the vectorized equivalent. `prev_presyn` buffers the
    presynaptic activities that produced the current potential.
    """

    synapses: list[SynapticState]
    representation: Representation = Representation.SYMMETRIC_PM1
    potential: float = 0.0
    activity: float = field(default=None)  # type: ignore[assignment]
    prev_presyn: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.activity is None:
            self.activity = self.representation.nofire_value
        if self.prev_presyn is None:
            self.prev_presyn = np.zeros(len(self.synapses))
        if len(self.prev_presyn) != len(self.synapses):
            raise ValueError("prev_presyn length must match the synapse count")

    @property
    def weights(self) -> np.ndarray:
        return np.array([s.weight for s in self.synapses])

    @property
    def traces(self) -> np.ndarray:
        return np.array([s.trace for s in self.synapses])

    def step(self, presyn, rng: np.random.Generator) -> float:
        """Integrate `presyn`, sample a new activity, and buffer the inputs."""
        presyn = np.asarray(presyn, dtype=float)
        self.potential = compute_potential(self.weights, presyn)
        self.activity = fire(self.potential, rng, self.representation)
        self.prev_presyn = presyn.copy()
        return self.activity

    def learn(self, reward: float, beta: float, gamma: float) -> None:
        """Decay-and-increment each trace with this step's score, then apply
        the reward-modulated weight update."""
        for j, syn in enumerate(self.synapses):
            g = grad_log_ratio(self.activity, self.potential,
                               float(self.prev_presyn[j]), self.representation)
            syn.trace = beta * syn.trace + g
            syn.weight += gamma * reward * syn.trace
